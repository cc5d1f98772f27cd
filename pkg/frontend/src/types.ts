// Shapes returned by the consultation service. The client renders these
// directly and keeps no authoritative state of its own.

export interface EmphasisSpan {
  start: number;
  end: number;
  level: 1 | 2 | 3;
  category: "spot_name" | "person_name" | "question";
  phonetic: string | null;
}

export type MotionKind = "Nod" | "Bow" | "LookMonitor" | "LookUser";

export interface MotionCommand {
  kind: MotionKind;
  at_ms: number;
  duration_ms: number;
}

export interface Candidate {
  spot_id: string;
  name: string;
  reading: string;
  reason: string;
  genres: string[];
  distance_km: number | null;
  image_ref: string;
}

export interface Plan {
  first_spot: string;
  second_spot: string;
  first_spot_name?: string;
  second_spot_name?: string;
  inter_spot_distance: number;
  feasible?: boolean;
}

export interface TurnResponse {
  session_id: string;
  system_text: string;
  markup: string;
  spans: EmphasisSpan[];
  motions: MotionCommand[];
  state: string;
  candidates: Candidate[];
  plan: Plan | null;
}

export interface TranscriptEntry {
  speaker: "user" | "system";
  text: string;
  timestamp: number;
  spans?: EmphasisSpan[];
}

export interface SessionView {
  session_id: string;
  state: string;
  transcript: TranscriptEntry[];
  keywords_1: string[];
  keywords_2: string[];
  candidates: Candidate[];
  plan: Plan | null;
  research_loops_1: number;
  research_loops_2: number;
  threshold_km: number;
}

export const SCENARIO_STATES = [
  "Icebreaker",
  "Interview1",
  "Introduction1",
  "Recommendation1",
  "ResearchInterview1",
  "Interview2",
  "Introduction2",
  "Recommendation2",
  "ResearchInterview2",
  "Closing",
  "End",
] as const;
