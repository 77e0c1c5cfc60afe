/* Review workstation wiring: one case on a canvas, three draggable handles,
 * a live verdict badge, annotation saves, and a prediction compare pane.
 *
 * All state lives in the small classes this file composes; everything here
 * is DOM plumbing. Pointer events are mapped through the viewport so the
 * annotation, the verdict requests and the saves never see screen pixels.
 */

import { ReviewApi, StaleRevisionError } from "./api.js";
import type { CaseSummary } from "./api.js";
import { CaseAnnotation } from "./annotation.js";
import type { HandleId } from "./annotation.js";
import { CompareDriver } from "./compare.js";
import {
  drawAnnotationOverlay,
  drawCompareOverlay,
  formatErrors,
  renderAngle,
  renderBadge,
} from "./render.js";
import { VerdictDriver } from "./verdict.js";
import { Viewport } from "./viewport.js";

const HIT_RADIUS_PX = 12; // screen pixels

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found as T;
}

class App {
  readonly api = new ReviewApi("");
  readonly viewport = new Viewport();

  cases: CaseSummary[] = [];
  current: CaseSummary | null = null;
  annotation: CaseAnnotation | null = null;
  image: HTMLImageElement | null = null;

  readonly canvas = el<HTMLCanvasElement>("viewer");
  readonly ctx = this.canvas.getContext("2d") as CanvasRenderingContext2D;
  readonly badgeEl = el<HTMLSpanElement>("badge");
  readonly angleEl = el<HTMLSpanElement>("angle");
  readonly revisionEl = el<HTMLSpanElement>("revision");
  readonly statusEl = el<HTMLDivElement>("status");
  readonly offlineEl = el<HTMLDivElement>("offline-banner");
  readonly caseListEl = el<HTMLUListElement>("case-list");
  readonly compareInfoEl = el<HTMLDivElement>("compare-info");
  readonly lateralityBtn = el<HTMLButtonElement>("laterality");
  readonly saveBtn = el<HTMLButtonElement>("save");
  readonly compareBtn = el<HTMLButtonElement>("compare");
  readonly brightnessInput = el<HTMLInputElement>("brightness");
  readonly contrastInput = el<HTMLInputElement>("contrast");

  readonly verdictDriver = new VerdictDriver(
    this.api,
    () => this.annotation,
    (s) => {
      renderBadge(this.badgeEl, s);
      renderAngle(this.angleEl, s);
      this.offlineEl.hidden = s.kind !== "offline";
      this.draw();
    },
  );

  readonly compareDriver = new CompareDriver(this.api, (s) => {
    this.compareInfoEl.hidden = s.kind === "hidden";
    if (s.kind === "ready") this.compareInfoEl.textContent = formatErrors(s.prediction);
    else if (s.kind === "no-model") this.compareInfoEl.textContent = s.message;
    else if (s.kind === "error") this.compareInfoEl.textContent = s.message;
    else if (s.kind === "loading") this.compareInfoEl.textContent = "comparing…";
    this.draw();
  });

  private dragging: HandleId | null = null;
  private panning: { sx: number; sy: number } | null = null;

  async boot(): Promise<void> {
    this.bindPointer();
    this.bindControls();
    this.cases = await this.api.listCases();
    this.renderCaseList();
    const first = this.cases[0];
    if (first) await this.openCase(first);
  }

  renderCaseList(): void {
    this.caseListEl.replaceChildren();
    for (const c of this.cases) {
      const li = document.createElement("li");
      li.textContent = `${c.case_id} (${c.laterality})` + (c.revision > 0 ? ` r${c.revision}` : "");
      li.className = this.current?.case_id === c.case_id ? "selected" : "";
      li.onclick = () => void this.openCase(c);
      this.caseListEl.appendChild(li);
    }
  }

  async openCase(summary: CaseSummary): Promise<void> {
    this.current = summary;
    this.compareDriver.hide();
    this.annotation = new CaseAnnotation(summary.width, summary.height, summary.laterality);
    const record = await this.api.getAnnotation(summary.case_id);
    this.annotation.loadFrom(record);
    this.revisionEl.textContent = `r${record.revision}`;
    this.image = await loadImage(this.api.imageUrl(summary.case_id));
    this.sizeCanvas();
    this.viewport.fit(summary.width, summary.height, this.canvas.width, this.canvas.height);
    this.renderCaseList();
    await this.verdictDriver.refreshNow();
  }

  sizeCanvas(): void {
    const rect = this.canvas.getBoundingClientRect();
    this.canvas.width = Math.max(1, Math.floor(rect.width));
    this.canvas.height = Math.max(1, Math.floor(rect.height));
  }

  draw(): void {
    const ctx = this.ctx;
    ctx.setTransform(1, 0, 0, 1, 0, 0);
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image && this.current) {
      ctx.save();
      ctx.filter = `brightness(${this.brightnessInput.value}%) contrast(${this.contrastInput.value}%)`;
      ctx.imageSmoothingEnabled = this.viewport.scale < 1;
      ctx.drawImage(
        this.image,
        this.viewport.offsetX,
        this.viewport.offsetY,
        this.current.width * this.viewport.scale,
        this.current.height * this.viewport.scale,
      );
      ctx.restore();
    }
    if (this.annotation) {
      drawAnnotationOverlay(ctx, this.viewport, this.annotation, this.verdictDriver.state);
    }
    const compare = this.compareDriver.state;
    if (compare.kind === "ready") {
      drawCompareOverlay(ctx, this.viewport, compare.prediction);
    }
    this.saveBtn.disabled = !(this.annotation?.dirty ?? false);
  }

  hitHandle(sx: number, sy: number): HandleId | null {
    if (!this.annotation) return null;
    let best: HandleId | null = null;
    let bestDist = HIT_RADIUS_PX;
    for (const id of ["nipple", "pec1", "pec2"] as const) {
      const h = this.annotation.handle(id);
      if (h === null) continue;
      const p = this.viewport.toScreen(h.x, h.y);
      const d = Math.hypot(p.x - sx, p.y - sy);
      if (d <= bestDist) {
        best = id;
        bestDist = d;
      }
    }
    return best;
  }

  bindPointer(): void {
    const pos = (ev: PointerEvent) => {
      const rect = this.canvas.getBoundingClientRect();
      return { sx: ev.clientX - rect.left, sy: ev.clientY - rect.top };
    };
    this.canvas.addEventListener("pointerdown", (ev) => {
      const { sx, sy } = pos(ev);
      if (ev.button === 1 || ev.shiftKey) {
        this.panning = { sx, sy };
      } else if (ev.button === 0) {
        this.dragging = this.hitHandle(sx, sy);
      }
      if (this.dragging || this.panning) this.canvas.setPointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      const { sx, sy } = pos(ev);
      if (this.panning) {
        this.viewport.panBy(sx - this.panning.sx, sy - this.panning.sy);
        this.panning = { sx, sy };
        this.draw();
        return;
      }
      if (this.dragging && this.annotation) {
        const p = this.viewport.toImage(sx, sy);
        if (this.annotation.moveHandle(this.dragging, p.x, p.y)) {
          this.verdictDriver.edited();
          this.draw();
        }
      }
    });
    const finish = () => {
      if (this.dragging) this.verdictDriver.dragEnded();
      this.dragging = null;
      this.panning = null;
    };
    this.canvas.addEventListener("pointerup", finish);
    this.canvas.addEventListener("pointercancel", finish);
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const rect = this.canvas.getBoundingClientRect();
      const factor = ev.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.viewport.zoomAt(ev.clientX - rect.left, ev.clientY - rect.top, factor);
      this.draw();
    });
    window.addEventListener("resize", () => {
      this.sizeCanvas();
      this.draw();
    });
  }

  bindControls(): void {
    this.lateralityBtn.onclick = () => {
      if (!this.annotation) return;
      this.annotation.laterality = this.annotation.laterality === "L" ? "R" : "L";
      this.lateralityBtn.textContent = this.annotation.laterality;
      void this.verdictDriver.refreshNow();
    };
    this.saveBtn.onclick = () => void this.save();
    this.compareBtn.onclick = () => {
      if (this.compareDriver.state.kind === "hidden" && this.current) {
        void this.compareDriver.show(this.current.case_id);
      } else {
        this.compareDriver.hide();
      }
    };
    for (const input of [this.brightnessInput, this.contrastInput]) {
      input.oninput = () => this.draw();
    }
  }

  async save(): Promise<void> {
    if (!this.annotation || !this.current) return;
    try {
      const res = await this.api.putAnnotation(this.current.case_id, this.annotation.saveBody());
      this.annotation.markSaved(res.revision);
      this.revisionEl.textContent = `r${res.revision}`;
      this.current.revision = res.revision;
      this.status(`saved r${res.revision}`);
      this.renderCaseList();
      this.draw();
    } catch (e) {
      if (e instanceof StaleRevisionError) {
        // someone else saved since we loaded; offer to take their version
        const reload = window.confirm(
          `This case was saved elsewhere (now r${e.currentRevision}). Load the newer annotation and drop local edits?`,
        );
        if (reload && this.current) await this.openCase(this.current);
        else this.status(`save blocked: server is at r${e.currentRevision}`);
      } else {
        this.status(e instanceof Error ? e.message : String(e));
      }
    }
  }

  status(text: string): void {
    this.statusEl.textContent = text;
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load ${url}`));
    img.src = url;
  });
}

window.addEventListener("DOMContentLoaded", () => {
  const app = new App();
  void app.boot().catch((e) => {
    app.status(e instanceof Error ? e.message : String(e));
    el<HTMLDivElement>("offline-banner").hidden = false;
  });
});
