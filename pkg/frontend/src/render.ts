/* Rendering helpers.
 *
 * The badge and the PNL overlay are drawn verbatim from the server's
 * verdict payload; there is no geometry in this file, only drawing. Pen is
 * the slice of CanvasRenderingContext2D the overlay needs, which also lets
 * tests record draw calls without a real canvas.
 */

import type { CasePrediction, LandmarkTriple, Verdict } from "./api.js";
import type { CaseAnnotation } from "./annotation.js";
import type { BadgeState } from "./verdict.js";
import type { Viewport } from "./viewport.js";

export interface BadgeElement {
  textContent: string | null;
  className: string;
}

export function renderBadge(el: BadgeElement, state: BadgeState): void {
  switch (state.kind) {
    case "incomplete":
      el.textContent = "place all three handles";
      el.className = "badge empty";
      break;
    case "degenerate":
      el.textContent = "degenerate line";
      el.className = "badge degenerate";
      break;
    case "offline":
      el.textContent = "offline";
      el.className = "badge offline";
      break;
    case "verdict":
      el.textContent = state.verdict.label;
      el.className = "badge " + state.verdict.label + (state.stale ? " stale" : "");
      break;
  }
}

export function renderAngle(el: BadgeElement, state: BadgeState): void {
  el.textContent = state.kind === "verdict" ? state.verdict.angle_deg.toFixed(1) + "°" : "—";
}

export interface Pen {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  setLineDash(segments: number[]): void;
}

const HANDLE_RADIUS = 6;

function line(pen: Pen, vp: Viewport, ax: number, ay: number, bx: number, by: number): void {
  const a = vp.toScreen(ax, ay);
  const b = vp.toScreen(bx, by);
  pen.beginPath();
  pen.moveTo(a.x, a.y);
  pen.lineTo(b.x, b.y);
  pen.stroke();
}

function dot(pen: Pen, vp: Viewport, x: number, y: number, r: number): void {
  const p = vp.toScreen(x, y);
  pen.beginPath();
  pen.arc(p.x, p.y, r, 0, Math.PI * 2);
  pen.fill();
}

/** The reader's handles plus, when a verdict is in, the PNL and its foot. */
export function drawAnnotationOverlay(
  pen: Pen,
  vp: Viewport,
  ann: CaseAnnotation,
  badge: BadgeState,
): void {
  pen.setLineDash([]);
  pen.lineWidth = 2;
  const a = ann.pec1;
  const b = ann.pec2;
  if (a !== null && b !== null) {
    pen.strokeStyle = "#e8c34a";
    line(pen, vp, a.x, a.y, b.x, b.y);
  }
  if (badge.kind === "verdict") {
    // both endpoints come from the server response
    const { start, end } = badge.verdict.pnl;
    pen.strokeStyle = "#4ac3e8";
    pen.setLineDash([6, 4]);
    line(pen, vp, start[0], start[1], end[0], end[1]);
    pen.setLineDash([]);
    pen.fillStyle = badge.verdict.in_bounds ? "#4ac3e8" : "#e85b4a";
    dot(pen, vp, end[0], end[1], 5);
  }
  pen.fillStyle = "#ffffff";
  for (const h of [ann.nipple, a, b]) {
    if (h !== null) dot(pen, vp, h.x, h.y, HANDLE_RADIUS / 2);
  }
}

function triple(pen: Pen, vp: Viewport, lm: LandmarkTriple, color: string): void {
  pen.strokeStyle = color;
  pen.fillStyle = color;
  pen.lineWidth = 2;
  line(pen, vp, lm.pec1[0], lm.pec1[1], lm.pec2[0], lm.pec2[1]);
  dot(pen, vp, lm.nipple[0], lm.nipple[1], 4);
  dot(pen, vp, lm.pec1[0], lm.pec1[1], 3);
  dot(pen, vp, lm.pec2[0], lm.pec2[1], 3);
}

/** Red predicted landmarks over blue saved-annotation landmarks. */
export function drawCompareOverlay(pen: Pen, vp: Viewport, prediction: CasePrediction): void {
  pen.setLineDash([]);
  triple(pen, vp, prediction.annotation, "#5b7fe8");
  triple(pen, vp, prediction.landmarks, "#e85b4a");
}

export function formatErrors(prediction: CasePrediction): string {
  const e = prediction.errors;
  return [
    `nipple ${e.nipple_mm.toFixed(2)} mm`,
    `pec1 ${e.pec1_mm.toFixed(2)} mm`,
    `pec2 ${e.pec2_mm.toFixed(2)} mm`,
    `perp ${e.perp_mm.toFixed(2)} mm`,
    `angle ${e.angular_deg.toFixed(2)}°`,
  ].join("  ·  ");
}

export function verdictSummary(v: Verdict): string {
  return `${v.label} · foot (${v.foot[0].toFixed(1)}, ${v.foot[1].toFixed(1)}) · ${v.angle_deg.toFixed(1)}°`;
}
