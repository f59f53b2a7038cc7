// Wire types, mirroring the annotation service API.

export type Choice = "A_sure" | "A_maybe" | "B_maybe" | "B_sure";

export const CHOICES: readonly Choice[] = ["A_sure", "A_maybe", "B_maybe", "B_sure"];

export interface PlaybackParams {
  fps: number;
  frames: number;
}

export interface TripletDescriptor {
  id: string;
  frames: {
    a: string[];
    b: string[];
    ref: string[];
  };
  playback: PlaybackParams;
}

export interface NextResponse {
  triplet: TripletDescriptor | null;
  none_remaining: boolean;
}

export interface JudgmentResponse {
  finalized: boolean;
  h: number | null;
}
