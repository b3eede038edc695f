/** Session state machine: one forced choice per displayed trial, reaction
 * times measured from stimulus readiness, lost acknowledgements retried
 * against the server's dedupe. Pure logic; rendering is the view's job. */

import type { Choice, Progress, StudyClient, TrialPayload } from "./api.js";

export type Phase =
  | "idle"
  | "starting"
  | "loading"
  | "stimulus"
  | "armed"
  | "submitting"
  | "complete"
  | "error";

export interface ControllerState {
  phase: Phase;
  sessionId: string | null;
  trial: TrialPayload | null;
  progress: Progress | null;
  resumed: boolean;
  message: string | null;
}

interface PendingSubmission {
  trialId: string;
  choice: Choice;
  rtMs: number;
}

export interface ControllerOptions {
  api: StudyClient;
  onChange?: (state: ControllerState) => void;
  /** Millisecond clock for reaction times; injectable for tests. */
  now?: () => number;
  /** Pause between transport retries; injectable for tests. */
  sleep?: (ms: number) => Promise<void>;
  maxRetries?: number;
  retryDelayMs?: number;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class SessionController {
  private readonly api: StudyClient;
  private readonly onChange: (state: ControllerState) => void;
  private readonly now: () => number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly maxRetries: number;
  private readonly retryDelayMs: number;

  private phase: Phase = "idle";
  private sessionId: string | null = null;
  private trial: TrialPayload | null = null;
  private progress: Progress | null = null;
  private resumed = false;
  private message: string | null = null;
  private armedAt = 0;
  private pending: PendingSubmission | null = null;

  constructor(options: ControllerOptions) {
    this.api = options.api;
    this.onChange = options.onChange ?? (() => {});
    this.now = options.now ?? (() => Date.now());
    this.sleep = options.sleep ?? defaultSleep;
    this.maxRetries = options.maxRetries ?? 3;
    this.retryDelayMs = options.retryDelayMs ?? 500;
  }

  get state(): ControllerState {
    return {
      phase: this.phase,
      sessionId: this.sessionId,
      trial: this.trial,
      progress: this.progress,
      resumed: this.resumed,
      message: this.message,
    };
  }

  private emit(): void {
    this.onChange(this.state);
  }

  private fail(context: string, err: unknown): void {
    this.phase = "error";
    this.message = `${context}: ${err instanceof Error ? err.message : String(err)}`;
    this.emit();
  }

  async start(subjectId: string, trialFileRef?: string): Promise<void> {
    if (this.phase !== "idle" && this.phase !== "error") {
      return;
    }
    const subject = subjectId.trim();
    if (subject === "") {
      this.message = "enter a subject id";
      this.emit();
      return;
    }
    this.phase = "starting";
    this.message = null;
    this.emit();
    let started;
    try {
      started = await this.api.startSession(subject, trialFileRef);
    } catch (err) {
      this.fail("could not start", err);
      return;
    }
    this.sessionId = started.sessionId;
    if (started.kind === "resumed") {
      this.resumed = true;
      this.message = `resuming: ${started.resume.done} of ${started.resume.total} already answered`;
    }
    await this.advance();
  }

  private async advance(): Promise<void> {
    if (this.sessionId === null) {
      return;
    }
    this.phase = "loading";
    this.trial = null;
    this.emit();
    let next;
    try {
      next = await this.api.nextTrial(this.sessionId);
    } catch (err) {
      this.fail("could not fetch the next trial", err);
      return;
    }
    this.progress = next.progress;
    if (next.kind === "complete") {
      this.phase = "complete";
      this.emit();
      return;
    }
    this.trial = next;
    this.phase = "stimulus";
    this.emit();
  }

  /** The view calls this once both stimulus images are displayable;
   * choices made earlier are ignored and the clock starts here. */
  stimulusReady(): void {
    if (this.phase !== "stimulus") {
      return;
    }
    this.phase = "armed";
    this.armedAt = this.now();
    this.emit();
  }

  async choose(side: "left" | "right"): Promise<void> {
    if (this.phase !== "armed" || this.trial === null) {
      return;
    }
    this.pending = {
      trialId: this.trial.trialId,
      choice: side === "left" ? "left_stronger" : "right_stronger",
      rtMs: this.now() - this.armedAt,
    };
    await this.deliverPending();
  }

  /** Resubmit after a transport failure; the server dedupes. */
  async retry(): Promise<void> {
    if (this.phase !== "error" || this.pending === null) {
      return;
    }
    await this.deliverPending();
  }

  private async deliverPending(): Promise<void> {
    if (this.pending === null || this.sessionId === null) {
      return;
    }
    const { trialId, choice, rtMs } = this.pending;
    this.phase = "submitting";
    this.message = null;
    this.emit();
    let result;
    for (let attempt = 0; ; attempt++) {
      try {
        result = await this.api.submitResponse(
          this.sessionId,
          trialId,
          choice,
          rtMs,
        );
        break;
      } catch (err) {
        if (attempt >= this.maxRetries) {
          this.fail("submission failed; your answer is kept for retry", err);
          return;
        }
        await this.sleep(this.retryDelayMs);
      }
    }
    this.pending = null;
    if (result.kind === "rejected") {
      // Out of step with the server; refetching resynchronizes.
      this.message = result.message;
    }
    await this.advance();
  }
}
