/** Browser bootstrap: read connection settings, mount the dashboard. */

import { ApiClient } from "./api.js";
import { DashboardApp } from "./app.js";

function query(name: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? "";
}

function mustGet<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

let app: DashboardApp | null = null;

function connect(): void {
  const server = mustGet<HTMLInputElement>("server-url").value.trim();
  const token = mustGet<HTMLInputElement>("token").value.trim();
  const operator = mustGet<HTMLInputElement>("operator").value.trim() || "dashboard";
  if (!server || !token) return;
  app?.stop();
  app = new DashboardApp(
    new ApiClient(server, token),
    {
      grid: mustGet("grid-body"),
      alerts: mustGet("alerts"),
      prescriptionForm: mustGet<HTMLFormElement>("rx-form"),
      banner: mustGet("banner"),
      timeline: mustGet<HTMLCanvasElement>("timeline"),
      timelineTitle: mustGet("timeline-title"),
    },
    operator,
  );
  app.start();
}

window.addEventListener("DOMContentLoaded", () => {
  mustGet<HTMLInputElement>("server-url").value = query("server") || "http://127.0.0.1:8000";
  const token = query("token");
  if (token) mustGet<HTMLInputElement>("token").value = token;
  mustGet("connect").addEventListener("click", connect);
  if (token) connect();
});
