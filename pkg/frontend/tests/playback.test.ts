// Playback cadence and frame lock, on fake timers.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { PlaybackEngine, type FramePane } from "../src/playback";

class RecordingPane implements FramePane {
  shown: Array<{ index: number; at: number }> = [];

  show(index: number): void {
    this.shown.push({ index, at: Date.now() });
  }
}

describe("PlaybackEngine", () => {
  beforeEach(() => {
    vi.useFakeTimers();
    vi.setSystemTime(0);
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("advances every 500 ms within +-50 ms over a 60 s window", () => {
    const pane = new RecordingPane();
    const engine = new PlaybackEngine([pane]);
    engine.start();
    pane.shown.length = 0; // drop the initial frame-0 render
    vi.advanceTimersByTime(60_000);
    // 2 fps: exactly 120 advances in 60 s
    expect(pane.shown.length).toBe(120);
    let prev = 0;
    for (const { at } of pane.shown) {
      const delta = at - prev;
      expect(delta).toBeGreaterThanOrEqual(450);
      expect(delta).toBeLessThanOrEqual(550);
      prev = at;
    }
    const mean = pane.shown[pane.shown.length - 1].at / pane.shown.length;
    expect(Math.abs(mean - 500)).toBeLessThanOrEqual(50);
    engine.stop();
  });

  it("keeps every pane on the same frame index at every tick", () => {
    const panes = [new RecordingPane(), new RecordingPane(), new RecordingPane()];
    const engine = new PlaybackEngine(panes);
    engine.start();
    vi.advanceTimersByTime(10_000);
    const [a, ref, b] = panes;
    expect(ref.shown.map((s) => s.index)).toEqual(a.shown.map((s) => s.index));
    expect(b.shown.map((s) => s.index)).toEqual(a.shown.map((s) => s.index));
    engine.stop();
  });

  it("wraps 11 -> 0 and loops with period 6 s at 12 frames", () => {
    const pane = new RecordingPane();
    const engine = new PlaybackEngine([pane]);
    engine.start();
    pane.shown.length = 0;
    vi.advanceTimersByTime(6_000); // one full loop
    const indices = pane.shown.map((s) => s.index);
    expect(indices).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0]);
    engine.stop();
  });

  it("pause preserves the frame index and resume continues from it", () => {
    const pane = new RecordingPane();
    const engine = new PlaybackEngine([pane]);
    engine.start();
    vi.advanceTimersByTime(2_500); // frame 5
    engine.pause();
    const paused = engine.currentFrame;
    expect(paused).toBe(5);
    vi.advanceTimersByTime(5_000);
    expect(engine.currentFrame).toBe(paused); // no drift while paused
    engine.resume();
    vi.advanceTimersByTime(500);
    expect(engine.currentFrame).toBe(paused + 1);
    engine.stop();
  });

  it("start always begins at frame 0 on every pane", () => {
    const panes = [new RecordingPane(), new RecordingPane(), new RecordingPane()];
    const engine = new PlaybackEngine(panes);
    engine.start();
    for (const pane of panes) {
      expect(pane.shown[0].index).toBe(0);
    }
    engine.stop();
  });
});
