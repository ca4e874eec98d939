/**
 * DOM rendering. Each render function rebuilds its container from the
 * view state; handlers are injected so the logic stays testable.
 */

import type { Alert, PatientSummary, PatientRecord, Place } from "./api.js";
import {
  formatTimestamp,
  scaleSegments,
  seriesPoints,
  type FieldError,
  type ViewState,
} from "./state.js";

export interface GridHandlers {
  onSelect: (patientId: string) => void;
}

export interface AlertHandlers {
  onAck: (alertId: string) => void;
}

export interface PrescriptionFields {
  spo2_floor: number;
  hr_floor: number;
  hr_ceiling: number;
  risk_ceiling: number;
  clear_hold_s: number;
}

export interface PrescriptionHandlers {
  onSave: (fields: PrescriptionFields) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  text?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text !== undefined) node.textContent = text;
  if (className) node.className = className;
  return node;
}

function placeLabel(place: Place | null): string {
  if (!place) return "unknown";
  return `${place.place_id} (${place.lat.toFixed(4)}, ${place.lon.toFixed(4)})`;
}

function vitalsLabel(value: number | null, unit: string): string {
  return value === null ? "—" : `${value}${unit}`;
}

export function renderGrid(tbody: HTMLElement, state: ViewState, handlers: GridHandlers): void {
  tbody.replaceChildren();
  for (const patient of state.patients) {
    const row = el("tr");
    row.dataset.patient = patient.patient_id;
    if (patient.patient_id === state.selectedPatient) row.classList.add("selected");
    const latest: PatientRecord | null = patient.latest;

    row.append(el("td", patient.patient_id));
    row.append(el("td", latest ? vitalsLabel(latest.spo2, "%") : "—"));
    row.append(el("td", latest ? vitalsLabel(latest.hr, " bpm") : "—"));
    const mobilityCell = el("td");
    if (latest) {
      mobilityCell.append(el("span", latest.mobility, `badge badge-${latest.mobility}`));
    }
    row.append(mobilityCell);
    row.append(el("td", latest ? placeLabel(latest.effective_place) : "—"));
    row.append(
      el("td", latest && latest.risk_score !== null ? latest.risk_score.toFixed(2) : "—"),
    );
    const alertsCell = el("td", String(patient.open_alerts));
    if (patient.open_alerts > 0) alertsCell.className = "open-alerts";
    row.append(alertsCell);
    row.append(el("td", latest ? formatTimestamp(latest.timestamp_ms) : "never"));
    row.addEventListener("click", () => handlers.onSelect(patient.patient_id));
    tbody.append(row);
  }
}

export function renderAlerts(container: HTMLElement, state: ViewState, handlers: AlertHandlers): void {
  container.replaceChildren();
  if (state.alerts.length === 0) {
    container.append(el("p", "No alerts.", "muted"));
    return;
  }
  for (const alert of state.alerts) {
    const row = el("div", undefined, `alert-row alert-${alert.status}`);
    row.dataset.alertId = alert.alert_id;
    row.append(el("span", alert.kind, "alert-kind"));
    row.append(el("span", alert.patient_id));
    // the place captured when the alert was raised, not the current one
    row.append(el("span", placeLabel(alert.place)));
    row.append(el("span", `raised ${formatTimestamp(alert.raised_at_ms)}`));
    row.append(el("span", alert.status, "alert-status"));
    if (alert.status === "acknowledged" && alert.acked_by) {
      row.append(el("span", `by ${alert.acked_by}`, "muted"));
    }
    if (alert.status === "open") {
      const button = el("button", "Acknowledge");
      button.addEventListener("click", () => handlers.onAck(alert.alert_id));
      row.append(button);
    }
    container.append(row);
  }
}

const PRESCRIPTION_INPUTS: Array<[keyof PrescriptionFields, string]> = [
  ["spo2_floor", "SpO2 floor (%)"],
  ["hr_floor", "HR floor (bpm)"],
  ["hr_ceiling", "HR ceiling (bpm)"],
  ["risk_ceiling", "Risk ceiling (0-1)"],
  ["clear_hold_s", "Clear hold (s)"],
];

export function renderPrescriptionForm(
  form: HTMLFormElement,
  state: ViewState,
  handlers: PrescriptionHandlers,
): void {
  form.replaceChildren();
  if (!state.prescription) {
    form.append(el("p", "Select a patient to edit thresholds.", "muted"));
    return;
  }
  const rx = state.prescription;
  for (const [name, label] of PRESCRIPTION_INPUTS) {
    const wrap = el("label", undefined, "rx-field");
    wrap.append(el("span", label));
    const input = el("input");
    input.name = name;
    input.type = "number";
    input.step = name === "risk_ceiling" ? "0.01" : "1";
    input.value = String(rx[name]);
    wrap.append(input);
    form.append(wrap);
    if (state.prescriptionError && state.prescriptionError.field === name) {
      form.append(el("p", state.prescriptionError.message, "field-error"));
    }
  }
  if (state.prescriptionError && !PRESCRIPTION_INPUTS.some(([n]) => n === state.prescriptionError!.field)) {
    form.append(el("p", `${state.prescriptionError.field}: ${state.prescriptionError.message}`, "field-error"));
  }
  const save = el("button", "Save thresholds");
  save.type = "submit";
  form.append(save);
  if (state.prescriptionSavedAt !== null) {
    form.append(el("p", `saved (updated by ${rx.updated_by})`, "muted saved-note"));
  }
  form.onsubmit = (event) => {
    event.preventDefault();
    const data = new FormData(form);
    handlers.onSave({
      spo2_floor: Number(data.get("spo2_floor")),
      hr_floor: Number(data.get("hr_floor")),
      hr_ceiling: Number(data.get("hr_ceiling")),
      risk_ceiling: Number(data.get("risk_ceiling")),
      clear_hold_s: Number(data.get("clear_hold_s")),
    });
  };
}

export function renderBanner(banner: HTMLElement, state: ViewState): void {
  if (state.connected) {
    banner.hidden = true;
    banner.textContent = "";
    return;
  }
  banner.hidden = false;
  const since =
    state.lastSyncMs === null
      ? "never synced"
      : `last sync ${new Date(state.lastSyncMs).toLocaleTimeString()}`;
  banner.textContent = `Connection lost — showing stale data (${since})`;
}

const SPO2_RANGE: [number, number] = [60, 100];
const HR_RANGE: [number, number] = [30, 180];

export function renderTimeline(canvas: HTMLCanvasElement, records: PatientRecord[]): void {
  const ctx = canvas.getContext ? canvas.getContext("2d") : null;
  if (!ctx) return; // headless test environments have no canvas backend
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (records.length === 0) return;

  const tMin = records[0].timestamp_ms;
  const tMax = records[records.length - 1].timestamp_ms;
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  for (let i = 1; i < 4; i++) {
    ctx.moveTo(0, (height / 4) * i);
    ctx.lineTo(width, (height / 4) * i);
  }
  ctx.stroke();

  const draw = (field: "spo2" | "hr", range: [number, number], color: string) => {
    const segments = scaleSegments(
      seriesPoints(records, field),
      width,
      height,
      tMin,
      tMax,
      range[0],
      range[1],
    );
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    for (const segment of segments) {
      ctx.beginPath();
      segment.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
      ctx.stroke();
    }
  };
  draw("spo2", SPO2_RANGE, "#1565c0");
  draw("hr", HR_RANGE, "#c62828");
}

export function fieldErrorFrom(field: string | null, message: string): FieldError {
  return { field: field ?? "request", message };
}
