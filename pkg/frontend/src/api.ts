/**
 * Typed client for the monitoring server's /v1 HTTP API.
 *
 * Every dashboard mutation goes through exactly one documented endpoint;
 * nothing here recomputes risk or alert logic client-side.
 */

export type Mobility = "resting" | "active" | "fall";
export type PlaceCategory = "home" | "clinic" | "outdoor" | "other";
export type AlertStatus = "open" | "acknowledged" | "cleared";

export interface Cell {
  mcc: number;
  mnc: number;
  lac: number;
  ci: number;
}

export interface Place {
  place_id: string;
  lat: number;
  lon: number;
  category: PlaceCategory;
}

export interface PatientRecord {
  patient_id: string;
  uplink_seq: number;
  timestamp_ms: number;
  hr: number | null;
  spo2: number | null;
  flags: string[];
  mobility: Mobility;
  cell: Cell;
  reason: string;
  place: Place | null;
  effective_place: Place | null;
  risk_score: number | null;
  ingest_time_ms: number;
}

export interface PatientSummary {
  patient_id: string;
  latest: PatientRecord | null;
  open_alerts: number;
}

export interface Prescription {
  patient_id: string;
  spo2_floor: number;
  hr_ceiling: number;
  hr_floor: number;
  risk_ceiling: number;
  clear_hold_s: number;
  updated_by: string;
  updated_at_ms: number;
}

export interface PrescriptionUpdate {
  spo2_floor?: number;
  hr_ceiling?: number;
  hr_floor?: number;
  risk_ceiling?: number;
  clear_hold_s?: number;
  updated_by?: string;
}

export interface Alert {
  alert_id: string;
  patient_id: string;
  kind: string;
  raised_at_ms: number;
  evidence: PatientRecord;
  place: Place | null;
  status: AlertStatus;
  acked_by: string | null;
  acked_at_ms: number | null;
  cleared_at_ms: number | null;
}

export interface ServerEvent {
  type: "record" | "alert";
  record?: PatientRecord;
  alert?: Alert;
}

export interface ErrorBody {
  error: string;
  field?: string;
  fields?: string[];
  detail?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody | null,
  ) {
    super(body?.detail ?? body?.error ?? `HTTP ${status}`);
    this.name = "ApiError";
  }

  /** Field name for 400 "invalid" responses, for inline form errors. */
  get field(): string | null {
    return this.body?.field ?? this.body?.fields?.[0] ?? null;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, private readonly token: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: this.headers(),
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, { error: "network", detail: String(err) });
    }
    if (!response.ok) {
      let parsed: ErrorBody | null = null;
      try {
        parsed = (await response.json()) as ErrorBody;
      } catch {
        parsed = null;
      }
      throw new ApiError(response.status, parsed);
    }
    return (await response.json()) as T;
  }

  listPatients(): Promise<PatientSummary[]> {
    return this.request("GET", "/v1/patients");
  }

  timeline(patientId: string, fromMs?: number, toMs?: number): Promise<PatientRecord[]> {
    const params = new URLSearchParams();
    if (fromMs !== undefined) params.set("from", String(fromMs));
    if (toMs !== undefined) params.set("to", String(toMs));
    const query = params.toString();
    return this.request(
      "GET",
      `/v1/patients/${encodeURIComponent(patientId)}/timeline${query ? "?" + query : ""}`,
    );
  }

  getPrescription(patientId: string): Promise<Prescription> {
    return this.request("GET", `/v1/patients/${encodeURIComponent(patientId)}/prescription`);
  }

  putPrescription(patientId: string, fields: PrescriptionUpdate): Promise<Prescription> {
    return this.request("PUT", `/v1/patients/${encodeURIComponent(patientId)}/prescription`, fields);
  }

  listAlerts(filter: { patient?: string; status?: AlertStatus } = {}): Promise<Alert[]> {
    const params = new URLSearchParams();
    if (filter.patient) params.set("patient", filter.patient);
    if (filter.status) params.set("status", filter.status);
    const query = params.toString();
    return this.request("GET", `/v1/alerts${query ? "?" + query : ""}`);
  }

  ackAlert(alertId: string, actor: string): Promise<Alert> {
    return this.request("POST", `/v1/alerts/${encodeURIComponent(alertId)}/ack`, { actor });
  }

  /**
   * Consume the server-push event stream (fetch-based because EventSource
   * cannot send the bearer header). Resolves when the stream ends; throws
   * on transport failure. Polling stays the source of truth either way.
   */
  async streamEvents(onEvent: (event: ServerEvent) => void, signal?: AbortSignal): Promise<void> {
    const response = await this.fetchFn(this.baseUrl + "/v1/events", {
      headers: { Authorization: `Bearer ${this.token}` },
      signal,
    } as RequestInit);
    if (!response.ok || !response.body) {
      throw new ApiError(response.status, null);
    }
    await readSseStream(response.body, (data) => {
      onEvent(JSON.parse(data) as ServerEvent);
    });
  }
}

/** Parse an SSE byte stream, invoking the callback with each data payload. */
export async function readSseStream(
  body: ReadableStream<Uint8Array>,
  onData: (data: string) => void,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let idx: number;
    while ((idx = buffer.indexOf("\n")) >= 0) {
      const line = buffer.slice(0, idx).replace(/\r$/, "");
      buffer = buffer.slice(idx + 1);
      if (line.startsWith("data:")) {
        onData(line.slice(5).trim());
      }
      // comment lines (": keepalive") and blank separators are ignored
    }
  }
}
