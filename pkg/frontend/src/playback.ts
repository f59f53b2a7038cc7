// Frame-accurate looped playback. Frames are preloaded images flipped by
// index, so the 2 fps cadence holds regardless of what a video codec
// would do; all panes are driven from one timer and can never diverge.

export interface FramePane {
  show(index: number): void;
}

export interface PlaybackOptions {
  frameCount?: number;
  periodMs?: number;
  onTick?: (frame: number) => void;
}

export const DEFAULT_FRAME_COUNT = 12;
export const DEFAULT_PERIOD_MS = 500; // 2 fps

export class PlaybackEngine {
  private frame = 0;
  private timer: ReturnType<typeof setInterval> | null = null;
  readonly frameCount: number;
  readonly periodMs: number;
  private readonly onTick?: (frame: number) => void;

  constructor(private readonly panes: FramePane[], options: PlaybackOptions = {}) {
    this.frameCount = options.frameCount ?? DEFAULT_FRAME_COUNT;
    this.periodMs = options.periodMs ?? DEFAULT_PERIOD_MS;
    this.onTick = options.onTick;
  }

  get currentFrame(): number {
    return this.frame;
  }

  get playing(): boolean {
    return this.timer !== null;
  }

  /** Start from frame 0; every pane shows the same index immediately. */
  start(): void {
    this.stop();
    this.frame = 0;
    this.render();
    this.timer = setInterval(() => this.advance(), this.periodMs);
  }

  pause(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Resume at the frame pause left off. */
  resume(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => this.advance(), this.periodMs);
    }
  }

  stop(): void {
    this.pause();
    this.frame = 0;
  }

  private advance(): void {
    this.frame = (this.frame + 1) % this.frameCount;
    this.render();
    this.onTick?.(this.frame);
  }

  private render(): void {
    for (const pane of this.panes) {
      pane.show(this.frame);
    }
  }
}
