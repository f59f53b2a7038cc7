// Session state machine: phase order, the preload gate, and the
// one-POST-per-choice guarantee.

import { describe, expect, it } from "vitest";

import { AnnotationClient } from "../src/api";
import { AnnotationSession, type Phase } from "../src/session";
import { MockService, makeTriplet } from "./mockService";

const instantLoader = async (url: string) => ({ url });

function makeSession(service: MockService, annotator: string, phases: Phase[],
                     loader = instantLoader) {
  const client = new AnnotationClient("", annotator, service.fetchFn(annotator));
  return new AnnotationSession(client, loader, {
    onPhase: (p) => phases.push(p),
  });
}

describe("AnnotationSession", () => {
  it("walks idle -> loading -> playing -> submitted -> loading -> done", async () => {
    const service = new MockService([makeTriplet("t0")]);
    const phases: Phase[] = [];
    const session = makeSession(service, "alice", phases);
    expect(session.currentPhase).toBe("idle");
    await session.start();
    expect(session.currentPhase).toBe("playing");
    await session.submit("B_sure");
    expect(session.currentPhase).toBe("done");
    expect(phases).toEqual(["loading", "playing", "submitted", "loading", "done"]);
    expect(session.completedCount).toBe(1);
  });

  it("never skips the playing phase on the way to submitted", async () => {
    const service = new MockService([makeTriplet("t0"), makeTriplet("t1")]);
    const phases: Phase[] = [];
    const session = makeSession(service, "alice", phases);
    await session.start();
    await session.submit("A_maybe");
    await session.submit("B_maybe");
    for (let i = 0; i < phases.length; i++) {
      if (phases[i] === "submitted") {
        expect(phases[i - 1]).toBe("playing");
      }
    }
  });

  it("requires all 36 frames before a submission is possible", async () => {
    const service = new MockService([makeTriplet("t0")]);
    let release: () => void = () => {};
    const gate = new Promise<void>((r) => (release = r));
    const slowLoader = async (url: string) => {
      await gate;
      return { url };
    };
    const phases: Phase[] = [];
    const session = makeSession(service, "alice", phases, slowLoader);
    const started = session.start();
    // frames are still loading: no submission path is open
    expect(session.currentPhase).toBe("loading");
    expect(session.canSubmit).toBe(false);
    await session.submit("B_sure");
    expect(service.postCount).toBe(0);
    release();
    await started;
    expect(session.currentPhase).toBe("playing");
    expect(session.canSubmit).toBe(true);
  });

  it("double submission produces exactly one POST", async () => {
    const service = new MockService([makeTriplet("t0")]);
    const session = makeSession(service, "alice", []);
    await session.start();
    await Promise.all([session.submit("B_sure"), session.submit("B_sure")]);
    expect(service.postCount).toBe(1);
  });

  it("failed frame fetches end in the error phase after retrying", async () => {
    const service = new MockService([makeTriplet("t0")]);
    const attempts = new Map<string, number>();
    const failingLoader = async (url: string) => {
      attempts.set(url, (attempts.get(url) ?? 0) + 1);
      throw new Error("404");
    };
    const phases: Phase[] = [];
    const errors: unknown[] = [];
    const client = new AnnotationClient("", "alice", service.fetchFn("alice"));
    const session = new AnnotationSession(client, failingLoader, {
      onPhase: (p) => phases.push(p),
      onError: (e) => errors.push(e),
    });
    await session.start();
    expect(session.currentPhase).toBe("error");
    expect(errors).toHaveLength(1);
    // each frame was retried once before giving up
    for (const count of attempts.values()) {
      expect(count).toBe(2);
    }
    // recovery path: retry goes back through loading
    await session.retry();
    expect(session.currentPhase).toBe("error"); // loader still failing
  });

  it("reports completion with the judged count", async () => {
    const service = new MockService([makeTriplet("t0"), makeTriplet("t1")]);
    let done = -1;
    const client = new AnnotationClient("", "alice", service.fetchFn("alice"));
    const session = new AnnotationSession(client, instantLoader, {
      onDone: (n) => (done = n),
    });
    await session.start();
    await session.submit("A_sure");
    await session.submit("B_sure");
    expect(done).toBe(2);
  });

  it("exposes the finalization payload from the third vote", async () => {
    const service = new MockService([makeTriplet("t0")]);
    const votes = [
      { user: "u1", choice: "B_sure" as const },
      { user: "u2", choice: "B_maybe" as const },
      { user: "u3", choice: "A_maybe" as const },
    ];
    let lastResponse: { finalized: boolean; h: number | null } | undefined;
    for (const { user, choice } of votes) {
      const client = new AnnotationClient("", user, service.fetchFn(user));
      const session = new AnnotationSession(client, instantLoader, {
        onJudgment: (r) => (lastResponse = r),
      });
      await session.start();
      await session.submit(choice);
    }
    expect(lastResponse).toEqual({ finalized: true, h: 0.66 });
  });
});
