// All 36 frames (3 clips x 12) must be resident before playback starts,
// so no judgment can be made off a partially viewed triplet.

export type FrameLoader<T = unknown> = (url: string) => Promise<T>;

export interface PreloadResult<T> {
  frames: Map<string, T>;
}

/** Load every URL, retrying each failure once; throws if any still fail. */
export async function preloadFrames<T>(
  urls: string[],
  load: FrameLoader<T>,
  retries = 1,
): Promise<PreloadResult<T>> {
  const frames = new Map<string, T>();
  const failed: string[] = [];
  await Promise.all(
    urls.map(async (url) => {
      for (let attempt = 0; attempt <= retries; attempt++) {
        try {
          frames.set(url, await load(url));
          return;
        } catch {
          // retry below
        }
      }
      failed.push(url);
    }),
  );
  if (failed.length > 0) {
    throw new Error(`failed to load ${failed.length} frame(s): ${failed[0]}`);
  }
  return { frames };
}

/** Browser loader: resolves once the image element has decoded. */
export function imageLoader(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`image failed: ${url}`));
    img.src = url;
  });
}
