// Entry point: wires the connection, input capture, and chart rendering.

import { drawBars, drawStrip } from "./charts.js";
import { Connection } from "./connection.js";
import { InputCapture } from "./input.js";
import { ClientModel } from "./model.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element ${id}`);
  return node as T;
}

function serverUrl(): string {
  const params = new URLSearchParams(location.search);
  return params.get("server") ?? `ws://${location.hostname || "127.0.0.1"}:8750`;
}

function main(): void {
  const model = new ClientModel(30);
  const banner = el<HTMLDivElement>("banner");
  const modeButton = el<HTMLButtonElement>("mode");
  const resetButton = el<HTMLButtonElement>("reset");
  const readout = el<HTMLDivElement>("readout");

  const refreshBanner = () => {
    banner.textContent = model.status === "connected" ? "" :
      model.status === "schema-mismatch"
        ? "schema mismatch: server speaks a different protocol version"
        : `${model.status}...`;
    banner.style.display = model.status === "connected" ? "none" : "block";
  };

  const connection = new Connection(serverUrl(), model, refreshBanner);
  connection.open();

  const input = new InputCapture((axis) => connection.send({ type: "input", axis }));
  input.attach(window);

  modeButton.addEventListener("click", () => {
    const next = model.latest?.mode === "adaptive" ? "fixed" : "adaptive";
    connection.send({ type: "mode", value: next });
  });
  resetButton.addEventListener("click", () => {
    connection.send({ type: "reset" });
    model.reset();
  });

  const positions = el<HTMLCanvasElement>("positions");
  const gains = el<HTMLCanvasElement>("gains");
  const eigs = el<HTMLCanvasElement>("eigs");
  const errors = el<HTMLCanvasElement>("errors");
  const weights = el<HTMLCanvasElement>("weights");

  const render = () => {
    const view = model.view();
    drawStrip(positions, view, [
      { label: "manipulator", color: "#1f77b4", pick: (p) => p.p_m },
      { label: "ref", color: "#9acbe8", pick: (p) => p.ref_m, dashed: true },
      { label: "vehicle", color: "#d62728", pick: (p) => p.p_v },
      { label: "ref", color: "#efa8a9", pick: (p) => p.ref_v, dashed: true },
    ], { title: "positions vs references" });
    drawStrip(gains, view, [
      { label: "kh1", color: "#1f77b4", pick: (p) => p.k_h_hat[0] ?? 0 },
      { label: "kh2", color: "#ff7f0e", pick: (p) => p.k_h_hat[1] ?? 0 },
      { label: "kh3", color: "#2ca02c", pick: (p) => p.k_h_hat[2] ?? 0 },
      { label: "ka1", color: "#1f77b4", pick: (p) => p.k_a[0] ?? 0, dashed: true },
      { label: "ka2", color: "#ff7f0e", pick: (p) => p.k_a[1] ?? 0, dashed: true },
      { label: "ka3", color: "#2ca02c", pick: (p) => p.k_a[2] ?? 0, dashed: true },
    ], { title: "gains: estimated human (solid), automation (dashed)" });
    drawStrip(eigs, view, [
      { label: "eig1", color: "#1f77b4", pick: (p) => p.eig[0] ?? 0 },
      { label: "eig2", color: "#ff7f0e", pick: (p) => p.eig[1] ?? 0 },
      { label: "eig3", color: "#2ca02c", pick: (p) => p.eig[2] ?? 0 },
    ], { title: "closed-loop eigenvalue real parts" });
    drawStrip(errors, view, [
      { label: "e_K", color: "#1f77b4", pick: (p) => p.e_k },
    ], { title: "gain estimation error (log10)", logScale: true });

    const theta = model.lastAdaptation?.theta_a;
    if (theta) {
      drawBars(weights, theta.q, theta.q.map((_, i) => `q${i + 1}`),
        `automation weights (J_g=${model.lastAdaptation?.J_g.toPrecision(4)})`);
    }
    const s = model.latest;
    if (s) {
      modeButton.textContent = `mode: ${s.mode}`;
      readout.textContent =
        `t=${s.t.toFixed(2)}s  u_h=${s.u_h[0]?.toFixed(3)}  ` +
        `u_a=${s.u_a[0]?.toFixed(3)}  e_K=${s.e_K.toExponential(2)}  ` +
        `adaptations=${model.adaptationCount}`;
    }
    requestAnimationFrame(render);
  };
  requestAnimationFrame(render);
}

window.addEventListener("load", main);
