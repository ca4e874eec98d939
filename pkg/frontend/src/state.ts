/**
 * Dashboard view model. Everything here is derived from /v1 responses;
 * clearing it and refetching must reproduce the identical view.
 */

import type { Alert, PatientRecord, PatientSummary, Prescription } from "./api.js";

export interface FieldError {
  field: string;
  message: string;
}

export interface ViewState {
  patients: PatientSummary[];
  alerts: Alert[];
  selectedPatient: string | null;
  timeline: PatientRecord[];
  prescription: Prescription | null;
  prescriptionError: FieldError | null;
  prescriptionSavedAt: number | null;
  lastSyncMs: number | null;
  connected: boolean;
}

export function initialState(): ViewState {
  return {
    patients: [],
    alerts: [],
    selectedPatient: null,
    timeline: [],
    prescription: null,
    prescriptionError: null,
    prescriptionSavedAt: null,
    lastSyncMs: null,
    connected: false,
  };
}

/** Insert or replace an alert, keeping newest-raised-first ordering. */
export function upsertAlert(alerts: Alert[], incoming: Alert): Alert[] {
  const rest = alerts.filter((a) => a.alert_id !== incoming.alert_id);
  const merged = [...rest, incoming];
  merged.sort((a, b) => b.raised_at_ms - a.raised_at_ms);
  return merged;
}

/** Optimistic acknowledge: flip the row now, reconcile with the server later. */
export function ackOptimistic(alerts: Alert[], alertId: string, actor: string): Alert[] {
  return alerts.map((a) =>
    a.alert_id === alertId && a.status === "open"
      ? { ...a, status: "acknowledged" as const, acked_by: actor }
      : a,
  );
}

/** Fold a pushed record event into the patient grid and open timeline. */
export function applyRecordEvent(state: ViewState, record: PatientRecord): void {
  const existing = state.patients.find((p) => p.patient_id === record.patient_id);
  if (existing) {
    if (!existing.latest || record.uplink_seq >= existing.latest.uplink_seq) {
      existing.latest = record;
    }
  } else {
    state.patients.push({ patient_id: record.patient_id, latest: record, open_alerts: 0 });
    state.patients.sort((a, b) => a.patient_id.localeCompare(b.patient_id));
  }
  if (
    state.selectedPatient === record.patient_id &&
    !state.timeline.some((r) => r.uplink_seq === record.uplink_seq)
  ) {
    state.timeline.push(record);
    state.timeline.sort((a, b) => a.uplink_seq - b.uplink_seq);
  }
}

/** Fold a pushed alert event in, adjusting the per-patient open counts. */
export function applyAlertEvent(state: ViewState, alert: Alert): void {
  state.alerts = upsertAlert(state.alerts, alert);
  const patient = state.patients.find((p) => p.patient_id === alert.patient_id);
  if (patient) {
    patient.open_alerts = state.alerts.filter(
      (a) => a.patient_id === alert.patient_id && a.status === "open",
    ).length;
  }
}

export interface SeriesPoint {
  t: number;
  v: number | null;
}

export function seriesPoints(records: PatientRecord[], field: "spo2" | "hr"): SeriesPoint[] {
  return records.map((r) => ({ t: r.timestamp_ms, v: r[field] }));
}

/**
 * Scale series points into pixel-space polyline segments, breaking the
 * line wherever a reading is missing.
 */
export function scaleSegments(
  points: SeriesPoint[],
  width: number,
  height: number,
  tMin: number,
  tMax: number,
  vMin: number,
  vMax: number,
): Array<Array<[number, number]>> {
  const tSpan = Math.max(1, tMax - tMin);
  const vSpan = Math.max(1e-9, vMax - vMin);
  const segments: Array<Array<[number, number]>> = [];
  let current: Array<[number, number]> = [];
  for (const p of points) {
    if (p.v === null) {
      if (current.length > 0) segments.push(current);
      current = [];
      continue;
    }
    const clamped = Math.min(vMax, Math.max(vMin, p.v));
    const x = ((p.t - tMin) / tSpan) * width;
    const y = height - ((clamped - vMin) / vSpan) * height;
    current.push([x, y]);
  }
  if (current.length > 0) segments.push(current);
  return segments;
}

/** Timestamps are scenario-relative in demos and epoch-ms in deployments. */
export function formatTimestamp(ms: number): string {
  if (ms > 1e12) {
    return new Date(ms).toLocaleTimeString();
  }
  return `t+${(ms / 1000).toFixed(0)}s`;
}
