// DOM wiring: three canvas panes (reference centered), four choice
// buttons, keyboard shortcuts 1-4, pause/resume, completion screen.
// Configuration comes from query parameters: ?annotator=NAME[&base=URL].

import { AnnotationClient } from "./api";
import { PlaybackEngine, type FramePane } from "./playback";
import { imageLoader } from "./preload";
import { AnnotationSession, type Phase } from "./session";
import { CHOICES, type Choice, type TripletDescriptor } from "./types";

const CHOICE_LABELS: Record<Choice, string> = {
  A_sure: "A (Sure)",
  A_maybe: "A (Maybe)",
  B_maybe: "B (Maybe)",
  B_sure: "B (Sure)",
};

class ImagePane implements FramePane {
  private frames: HTMLImageElement[] = [];

  constructor(private readonly img: HTMLImageElement) {}

  setFrames(frames: HTMLImageElement[]): void {
    this.frames = frames;
  }

  show(index: number): void {
    const frame = this.frames[index];
    if (frame) {
      this.img.src = frame.src;
    }
  }
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  parent: HTMLElement,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  parent.appendChild(node);
  return node;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const annotator = params.get("annotator") ?? "";
  const base = params.get("base") ?? "";
  const root = document.getElementById("app")!;

  if (!annotator) {
    root.textContent = "Missing ?annotator=YOUR_ID in the URL.";
    return;
  }

  const status = el("div", "status", root);
  const deck = el("div", "deck", root);
  const paneEls: Record<"a" | "ref" | "b", HTMLImageElement> = {} as never;
  for (const key of ["a", "ref", "b"] as const) {
    const cell = el("figure", `pane pane-${key}`, deck);
    paneEls[key] = el("img", "frame", cell);
    const caption = el("figcaption", "label", cell);
    caption.textContent = key === "ref" ? "R (reference)" : key.toUpperCase();
  }
  const controls = el("div", "controls", root);
  const buttons = new Map<Choice, HTMLButtonElement>();
  for (const choice of CHOICES) {
    const btn = el("button", "choice", controls);
    btn.textContent = CHOICE_LABELS[choice];
    btn.disabled = true;
    buttons.set(choice, btn);
  }
  const pauseBtn = el("button", "pause", controls);
  pauseBtn.textContent = "Pause";

  const panes = {
    a: new ImagePane(paneEls.a),
    ref: new ImagePane(paneEls.ref),
    b: new ImagePane(paneEls.b),
  };
  let engine: PlaybackEngine | null = null;

  const setButtonsEnabled = (enabled: boolean) => {
    for (const btn of buttons.values()) btn.disabled = !enabled;
  };

  const client = new AnnotationClient(base, annotator);
  const session = new AnnotationSession<HTMLImageElement>(client, imageLoader, {
    onPhase: (phase: Phase) => {
      setButtonsEnabled(phase === "playing");
      if (phase === "loading") status.textContent = "Loading next triplet…";
      if (phase === "submitted") status.textContent = "Recording judgment…";
    },
    onTriplet: (triplet: TripletDescriptor, frames) => {
      const pick = (urls: string[]) => urls.map((u) => frames.get(u)!);
      panes.a.setFrames(pick(triplet.frames.a));
      panes.b.setFrames(pick(triplet.frames.b));
      panes.ref.setFrames(pick(triplet.frames.ref));
      engine?.stop();
      engine = new PlaybackEngine([panes.a, panes.ref, panes.b], {
        frameCount: triplet.playback.frames,
        periodMs: 1000 / triplet.playback.fps,
      });
      engine.start();
      status.textContent = `Which video is closer to the reference? (${triplet.id})`;
    },
    onDone: (completed) => {
      engine?.stop();
      deck.style.display = "none";
      controls.style.display = "none";
      status.textContent = `All done - ${completed} judgment(s) recorded. Thank you!`;
    },
    onError: (err) => {
      status.textContent = `Something went wrong (${String(err)}). Retrying may help.`;
      const retryBtn = el("button", "retry", controls);
      retryBtn.textContent = "Retry";
      retryBtn.onclick = () => {
        retryBtn.remove();
        void session.retry();
      };
    },
  });

  const submit = (choice: Choice) => {
    engine?.pause();
    void session.submit(choice);
  };
  buttons.forEach((btn, choice) => {
    btn.onclick = () => submit(choice);
  });
  window.addEventListener("keydown", (ev) => {
    const index = Number.parseInt(ev.key, 10) - 1;
    if (index >= 0 && index < CHOICES.length && session.canSubmit) {
      submit(CHOICES[index]);
    }
  });
  pauseBtn.onclick = () => {
    if (!engine) return;
    if (engine.playing) {
      engine.pause();
      pauseBtn.textContent = "Resume";
    } else {
      engine.resume();
      pauseBtn.textContent = "Pause";
    }
  };

  void session.start();
}

main();
