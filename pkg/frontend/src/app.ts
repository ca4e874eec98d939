/**
 * Dashboard application: polling loop (2 s default), optional push-stream
 * upgrade, and the user actions that steer the server.
 */

import { ApiClient, ApiError, type ServerEvent } from "./api.js";
import {
  ackOptimistic,
  applyAlertEvent,
  applyRecordEvent,
  initialState,
  type ViewState,
} from "./state.js";
import {
  fieldErrorFrom,
  renderAlerts,
  renderBanner,
  renderGrid,
  renderPrescriptionForm,
  renderTimeline,
  type PrescriptionFields,
} from "./ui.js";

export interface DashboardDom {
  grid: HTMLElement;
  alerts: HTMLElement;
  prescriptionForm: HTMLFormElement;
  banner: HTMLElement;
  timeline: HTMLCanvasElement;
  timelineTitle: HTMLElement;
}

export class DashboardApp {
  state: ViewState = initialState();
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private streamAbort: AbortController | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly dom: DashboardDom,
    private readonly actor: string = "dashboard",
    private readonly now: () => number = () => Date.now(),
  ) {}

  start(pollMs = 2000): void {
    void this.refreshAll();
    this.pollTimer = setInterval(() => void this.refreshAll(), pollMs);
    this.upgradeToStream();
  }

  stop(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
    this.streamAbort?.abort();
  }

  /** Rebuild the whole view from the API; the dashboard holds no business state. */
  async refreshAll(): Promise<void> {
    try {
      const [patients, alerts] = await Promise.all([
        this.client.listPatients(),
        this.client.listAlerts(),
      ]);
      this.state.patients = patients;
      this.state.alerts = alerts;
      if (this.state.selectedPatient) {
        await this.refreshSelected(this.state.selectedPatient);
      }
      this.state.connected = true;
      this.state.lastSyncMs = this.now();
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) {
        this.state.connected = false;
      } else {
        throw err;
      }
    }
    this.render();
  }

  private async refreshSelected(patientId: string): Promise<void> {
    this.state.timeline = await this.client.timeline(patientId);
    try {
      this.state.prescription = await this.client.getPrescription(patientId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.prescription = null; // nothing ingested yet
      } else {
        throw err;
      }
    }
  }

  async select(patientId: string): Promise<void> {
    this.state.selectedPatient = patientId;
    this.state.prescriptionError = null;
    this.state.prescriptionSavedAt = null;
    try {
      await this.refreshSelected(patientId);
      this.state.connected = true;
      this.state.lastSyncMs = this.now();
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) {
        this.state.connected = false;
      } else {
        throw err;
      }
    }
    this.render();
  }

  /** Form submit: one PUT; server-side Invalid errors surface inline. */
  async savePrescription(fields: PrescriptionFields): Promise<void> {
    if (!this.state.selectedPatient) return;
    try {
      this.state.prescription = await this.client.putPrescription(this.state.selectedPatient, {
        ...fields,
        updated_by: this.actor,
      });
      this.state.prescriptionError = null;
      this.state.prescriptionSavedAt = this.now();
    } catch (err) {
      if (err instanceof ApiError && err.status === 400) {
        this.state.prescriptionError = fieldErrorFrom(err.field, err.message);
      } else if (err instanceof ApiError && err.status === 0) {
        this.state.connected = false;
      } else {
        throw err;
      }
    }
    this.render();
  }

  /** Ack button: optimistic flip, reconciled with the server response. */
  async ackAlert(alertId: string): Promise<void> {
    this.state.alerts = ackOptimistic(this.state.alerts, alertId, this.actor);
    this.render();
    try {
      const confirmed = await this.client.ackAlert(alertId, this.actor);
      this.state.alerts = this.state.alerts.map((a) =>
        a.alert_id === alertId ? confirmed : a,
      );
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 404)) {
        await this.refreshAll(); // conflict: somebody cleared it first; resync the row
        return;
      }
      if (err instanceof ApiError && err.status === 0) {
        this.state.connected = false;
      } else {
        throw err;
      }
    }
    this.render();
  }

  /** Try the push stream; polling keeps running as the contract either way. */
  private upgradeToStream(): void {
    this.streamAbort = new AbortController();
    void this.client
      .streamEvents((event) => this.applyEvent(event), this.streamAbort.signal)
      .catch(() => {
        /* stream unavailable: polling covers it */
      });
  }

  applyEvent(event: ServerEvent): void {
    if (event.type === "record" && event.record) {
      applyRecordEvent(this.state, event.record);
    } else if (event.type === "alert" && event.alert) {
      applyAlertEvent(this.state, event.alert);
    }
    this.render();
  }

  render(): void {
    renderBanner(this.dom.banner, this.state);
    renderGrid(this.dom.grid, this.state, { onSelect: (pid) => void this.select(pid) });
    renderAlerts(this.dom.alerts, this.state, { onAck: (id) => void this.ackAlert(id) });
    renderPrescriptionForm(this.dom.prescriptionForm, this.state, {
      onSave: (fields) => void this.savePrescription(fields),
    });
    this.dom.timelineTitle.textContent = this.state.selectedPatient
      ? `Timeline — ${this.state.selectedPatient}`
      : "Timeline — select a patient";
    renderTimeline(this.dom.timeline, this.state.timeline);
  }
}
