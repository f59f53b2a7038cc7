// Session state machine: idle -> loading -> playing -> submitted ->
// loading -> ... -> done. No transition may skip "playing", so a choice
// can only ever be submitted for a triplet that is looping on screen
// with every frame loaded.

import type { AnnotationClient } from "./api";
import { preloadFrames, type FrameLoader } from "./preload";
import type { Choice, JudgmentResponse, TripletDescriptor } from "./types";

export type Phase = "idle" | "loading" | "playing" | "submitted" | "done" | "error";

const TRANSITIONS: Record<Phase, readonly Phase[]> = {
  idle: ["loading"],
  loading: ["playing", "done", "error"],
  playing: ["submitted"],
  submitted: ["loading", "error"],
  done: [],
  error: ["loading"],
};

export interface SessionHooks<T = unknown> {
  onPhase?: (phase: Phase) => void;
  onTriplet?: (triplet: TripletDescriptor, frames: Map<string, T>) => void;
  onJudgment?: (response: JudgmentResponse) => void;
  onDone?: (completed: number) => void;
  onError?: (err: unknown) => void;
}

export class AnnotationSession<T = unknown> {
  private phase: Phase = "idle";
  private triplet: TripletDescriptor | null = null;
  private submitting = false;
  private completed = 0;

  constructor(
    private readonly client: AnnotationClient,
    private readonly loader: FrameLoader<T>,
    private readonly hooks: SessionHooks<T> = {},
  ) {}

  get currentPhase(): Phase {
    return this.phase;
  }

  get currentTriplet(): TripletDescriptor | null {
    return this.triplet;
  }

  get completedCount(): number {
    return this.completed;
  }

  get canSubmit(): boolean {
    return this.phase === "playing" && !this.submitting && this.triplet !== null;
  }

  private transition(next: Phase): void {
    if (!TRANSITIONS[this.phase].includes(next)) {
      throw new Error(`illegal transition ${this.phase} -> ${next}`);
    }
    this.phase = next;
    this.hooks.onPhase?.(next);
  }

  async start(): Promise<void> {
    if (this.phase !== "idle") {
      throw new Error("session already started");
    }
    await this.loadNext();
  }

  private async loadNext(): Promise<void> {
    this.transition("loading");
    this.triplet = null;
    try {
      const next = await this.client.nextTriplet();
      if (next.none_remaining || next.triplet === null) {
        this.transition("done");
        this.hooks.onDone?.(this.completed);
        return;
      }
      const triplet = next.triplet;
      const urls = [...triplet.frames.a, ...triplet.frames.b, ...triplet.frames.ref];
      const { frames } = await preloadFrames(urls, this.loader);
      this.triplet = triplet;
      this.transition("playing");
      this.hooks.onTriplet?.(triplet, frames);
    } catch (err) {
      this.transition("error");
      this.hooks.onError?.(err);
    }
  }

  async retry(): Promise<void> {
    if (this.phase !== "error") {
      throw new Error("retry is only valid from the error phase");
    }
    await this.loadNext();
  }

  /** Submit the choice for the playing triplet: exactly one POST. */
  async submit(choice: Choice): Promise<void> {
    if (!this.canSubmit || this.triplet === null) {
      return; // double clicks and out-of-phase calls are ignored
    }
    this.submitting = true;
    const tripletId = this.triplet.id;
    this.transition("submitted");
    try {
      const response = await this.client.postJudgment(tripletId, choice);
      this.completed += 1;
      this.hooks.onJudgment?.(response);
      this.submitting = false;
      await this.loadNext();
    } catch (err) {
      this.submitting = false;
      this.transition("error");
      this.hooks.onError?.(err);
    }
  }
}
