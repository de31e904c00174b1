import type { SurveyApi } from "./api.js";
import { ApiError } from "./api.js";
import type { Demographics, PairPayload, UiSessionState } from "./types.js";
import { displayOrder } from "./seededOrder.js";
import type { GazeForwarder } from "./gazeBridge.js";

export type FlowListener = (state: UiSessionState) => void;

/**
 * Drives one participant through the study: demographics, then the pair
 * loop, then the completion screen.
 *
 * A choice is submittable exactly once per pair: while a submission is in
 * flight or after the current pair is answered, further clicks are ignored,
 * so double-clicks and impatient re-clicks never produce a second request.
 * Network retries live below in the API client and are idempotent.
 */
export class SessionFlow {
  readonly state: UiSessionState = {
    sessionId: null,
    stage: "demographics",
    pair: null,
    answered: 0,
    total: 0,
    submitting: false,
    errorMessage: null,
  };

  private answeredPairs = new Set<string>();
  private listeners = new Set<FlowListener>();
  private sessionListeners = new Set<(sessionId: string) => void>();
  private forwarder: GazeForwarder | null = null;
  choiceRequests = 0; // instrumentation: requests actually issued

  constructor(private readonly api: SurveyApi) {}

  onChange(listener: FlowListener): void {
    this.listeners.add(listener);
  }

  onSessionStarted(listener: (sessionId: string) => void): void {
    this.sessionListeners.add(listener);
  }

  attachGaze(forwarder: GazeForwarder): void {
    this.forwarder = forwarder;
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  async start(demographics: Demographics): Promise<void> {
    try {
      const session = await this.api.createSession(demographics);
      this.state.sessionId = session.session_id;
      this.state.total = session.pairs_per_session;
      for (const listener of this.sessionListeners) listener(session.session_id);
      await this.advance();
    } catch (err) {
      this.toError(err);
    }
  }

  /** Display geometry for the current pair; both slots render identically sized. */
  currentDisplay() {
    const pair = this.state.pair;
    if (!pair) return null;
    return displayOrder(pair.pair_id, pair.left_url, pair.right_url);
  }

  private async advance(): Promise<void> {
    if (!this.state.sessionId) return;
    if (this.state.answered >= this.state.total) {
      this.state.stage = "done";
      this.state.pair = null;
      this.forwarder?.viewingImage(null);
      await this.forwarder?.stop();
      this.emit();
      return;
    }
    try {
      const pair = await this.api.nextPair(this.state.sessionId);
      this.state.pair = pair;
      this.state.stage = "pair";
      // gaze is attributed to the pair as a whole via its two images; the
      // bridge tags whichever image the participant is currently inspecting
      this.forwarder?.viewingImage(pair.left_image);
      this.emit();
    } catch (err) {
      this.toError(err);
    }
  }

  /** The participant looked over to the other image of the pair. */
  inspecting(position: "first" | "second"): void {
    const pair = this.state.pair;
    if (!pair || !this.forwarder) return;
    const display = displayOrder(pair.pair_id, pair.left_image, pair.right_image);
    this.forwarder.viewingImage(
      position === "first" ? display.firstUrl : display.secondUrl,
    );
  }

  /**
   * Submit the choice for the displayed position ("first" = left slot on
   * screen). Returns true when a request was actually issued.
   */
  async choose(position: "first" | "second"): Promise<boolean> {
    const pair = this.state.pair;
    if (!pair || this.state.stage !== "pair" || this.state.submitting) return false;
    if (this.answeredPairs.has(pair.pair_id)) return false;

    const display = this.currentDisplay();
    if (!display) return false;
    const chosen = display.sideFor(position);

    this.state.submitting = true;
    this.emit();
    try {
      this.choiceRequests += 1;
      await this.api.submitChoice(this.state.sessionId!, pair.pair_id, chosen);
      this.answeredPairs.add(pair.pair_id);
      this.state.answered += 1;
      this.state.submitting = false;
      await this.advance();
      return true;
    } catch (err) {
      this.state.submitting = false;
      if (err instanceof ApiError && err.status === 409) {
        // the service already holds an answer for this pair; move on
        this.answeredPairs.add(pair.pair_id);
        this.state.answered += 1;
        await this.advance();
        return true;
      }
      this.toError(err);
      return false;
    }
  }

  private toError(err: unknown): void {
    this.state.stage = "error";
    this.state.errorMessage =
      err instanceof ApiError && err.status === 404
        ? "This session has expired. Please restart the survey."
        : String(err instanceof Error ? err.message : err);
    this.emit();
  }
}
