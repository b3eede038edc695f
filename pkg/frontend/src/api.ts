/** Typed client for the benchlab collection service HTTP API. */

export type Choice = "left_stronger" | "right_stronger";

export interface Progress {
  done: number;
  total: number;
}

export interface SessionCreated {
  kind: "created";
  sessionId: string;
  nTrials: number;
}

/** The server keyed an existing session to this subject; resume it. */
export interface SessionResumed {
  kind: "resumed";
  sessionId: string;
  status: string;
  resume: Progress;
}

export type SessionStart = SessionCreated | SessionResumed;

export interface TrialPayload {
  kind: "trial";
  trialId: string;
  compositeImageUrl: string;
  originalImageUrl: string;
  progress: Progress;
}

export interface SessionDone {
  kind: "complete";
  progress: Progress;
}

export type NextTrial = TrialPayload | SessionDone;

export interface SubmitAccepted {
  kind: "accepted";
  nextAvailable: boolean;
  progress: Progress;
}

/** 409 with duplicate=true: an earlier attempt already landed. */
export interface SubmitDelivered {
  kind: "already_delivered";
  nextAvailable: boolean;
}

/** Protocol rejection (bad payload, wrong trial, finished session). */
export interface SubmitRejected {
  kind: "rejected";
  message: string;
  nextAvailable: boolean;
}

export type SubmitResult = SubmitAccepted | SubmitDelivered | SubmitRejected;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

/** What the session controller needs from a transport. */
export interface StudyClient {
  startSession(subjectId: string, trialFileRef?: string): Promise<SessionStart>;
  nextTrial(sessionId: string): Promise<NextTrial>;
  submitResponse(
    sessionId: string,
    trialId: string,
    choice: Choice,
    rtMs: number,
  ): Promise<SubmitResult>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function bodyOf(res: Response): Promise<Record<string, unknown>> {
  try {
    const parsed: unknown = await res.json();
    if (parsed !== null && typeof parsed === "object") {
      return parsed as Record<string, unknown>;
    }
  } catch {
    /* non-JSON body; fall through */
  }
  return {};
}

function messageOf(body: Record<string, unknown>, fallback: string): string {
  return typeof body.error === "string" ? body.error : fallback;
}

function progressOf(value: unknown): Progress {
  const p = (value ?? {}) as Record<string, unknown>;
  return {
    done: typeof p.done === "number" ? p.done : 0,
    total: typeof p.total === "number" ? p.total : 0,
  };
}

export class StudyApi implements StudyClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl =
      fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  resolveUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async request(
    method: string,
    path: string,
    payload?: unknown,
  ): Promise<Response> {
    const init: RequestInit = { method };
    if (payload !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(payload);
    }
    return this.fetchImpl(this.resolveUrl(path), init);
  }

  async startSession(
    subjectId: string,
    trialFileRef?: string,
  ): Promise<SessionStart> {
    const payload: Record<string, unknown> = { subject_id: subjectId };
    if (trialFileRef !== undefined) {
      payload.trial_file_ref = trialFileRef;
    }
    const res = await this.request("POST", "/api/sessions", payload);
    const body = await bodyOf(res);
    if (res.status === 201) {
      return {
        kind: "created",
        sessionId: String(body.session_id),
        nTrials: Number(body.n_trials),
      };
    }
    if (res.status === 409 && typeof body.session_id === "string") {
      return {
        kind: "resumed",
        sessionId: body.session_id,
        status: String(body.status ?? "active"),
        resume: progressOf(body.resume),
      };
    }
    throw new ApiError(messageOf(body, "could not start session"), res.status);
  }

  async nextTrial(sessionId: string): Promise<NextTrial> {
    const res = await this.request(
      "GET",
      `/api/sessions/${encodeURIComponent(sessionId)}/next`,
    );
    const body = await bodyOf(res);
    if (!res.ok) {
      throw new ApiError(messageOf(body, "could not fetch trial"), res.status);
    }
    if (body.status === "complete") {
      return { kind: "complete", progress: progressOf(body.progress) };
    }
    return {
      kind: "trial",
      trialId: String(body.trial_id),
      compositeImageUrl: this.resolveUrl(String(body.composite_image_url)),
      originalImageUrl: this.resolveUrl(String(body.original_image_url)),
      progress: progressOf(body.progress),
    };
  }

  async submitResponse(
    sessionId: string,
    trialId: string,
    choice: Choice,
    rtMs: number,
  ): Promise<SubmitResult> {
    const res = await this.request(
      "POST",
      `/api/sessions/${encodeURIComponent(sessionId)}/response`,
      { trial_id: trialId, choice, rt_ms: rtMs },
    );
    const body = await bodyOf(res);
    if (res.ok) {
      return {
        kind: "accepted",
        nextAvailable: body.next_available === true,
        progress: progressOf(body.progress),
      };
    }
    if (res.status === 409 && body.duplicate === true) {
      return {
        kind: "already_delivered",
        nextAvailable: body.next_available === true,
      };
    }
    if (res.status === 409 || res.status === 400 || res.status === 422) {
      return {
        kind: "rejected",
        message: messageOf(body, `rejected (${res.status})`),
        nextAvailable: body.next_available === true,
      };
    }
    throw new ApiError(messageOf(body, "could not submit"), res.status);
  }
}
