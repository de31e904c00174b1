export interface Demographics {
  age_band: string;
  gender?: string;
}

export interface SessionInfo {
  session_id: string;
  pairs_per_session: number;
}

export interface PairPayload {
  pair_id: string;
  left_image: string;
  right_image: string;
  left_url: string;
  right_url: string;
  index: number;
  total: number;
}

export type ServerSide = "left" | "right";

export interface ChoiceEcho {
  pair_id: string;
  left: string;
  right: string;
  chosen: ServerSide;
  session_id: string;
  t_ms: number;
}

export interface GazeSample {
  t_ms: number;
  x_px: number;
  y_px: number;
  valid: boolean;
}

/** Session progress as the UI tracks it. */
export interface UiSessionState {
  sessionId: string | null;
  stage: "demographics" | "pair" | "done" | "error";
  pair: PairPayload | null;
  answered: number;
  total: number;
  submitting: boolean;
  errorMessage: string | null;
}
