/* Editable annotation state for one case.
 *
 * Coordinates are native image pixels throughout; zoom/pan only exists in
 * viewport.ts, which maps pointer events before they reach this class. The
 * nipple is stored as its bounding box, matching the wire schema; the
 * draggable handle is the box centre. Dragging the nipple translates the
 * box and then re-derives the handle from the translated box, so the handle
 * shown after a drag and the handle shown after a save/load round-trip come
 * from the same bits.
 */

import type { AnnotationBody, AnnotationRecord, LandmarkTriple, Laterality, XY } from "./api.js";

export type HandleId = "nipple" | "pec1" | "pec2";

/** Pectoral handles may never come closer than this (image pixels). */
export const MIN_PEC_SEPARATION = 2;

/** Box size used when the nipple is placed fresh rather than loaded. */
const DEFAULT_BBOX_HALF = 8;

export interface Handle {
  x: number;
  y: number;
}

export class CaseAnnotation {
  laterality: Laterality;
  revision = 0;
  /** true when there are edits the server has not seen */
  dirty = false;

  private bbox: [number, number, number, number] | null = null;
  private pecs: [Handle | null, Handle | null] = [null, null];

  constructor(
    readonly width: number,
    readonly height: number,
    laterality: Laterality = "L",
  ) {
    if (!(width >= 1) || !(height >= 1)) {
      throw new Error(`bad image shape ${width}x${height}`);
    }
    this.laterality = laterality;
  }

  /** Centre of the nipple box, or null before placement. */
  get nipple(): Handle | null {
    if (this.bbox === null) return null;
    const [x0, y0, x1, y1] = this.bbox;
    return { x: (x0 + x1) / 2, y: (y0 + y1) / 2 };
  }

  get pec1(): Handle | null {
    return this.pecs[0];
  }

  get pec2(): Handle | null {
    return this.pecs[1];
  }

  get complete(): boolean {
    return this.bbox !== null && this.pecs[0] !== null && this.pecs[1] !== null;
  }

  handle(id: HandleId): Handle | null {
    if (id === "nipple") return this.nipple;
    return id === "pec1" ? this.pecs[0] : this.pecs[1];
  }

  /**
   * Place or drag a handle. The target is clamped to the image; a pectoral
   * move that would bring the two endpoints closer than MIN_PEC_SEPARATION
   * is rejected outright (the handle stays put and the caller gets false),
   * which keeps the line non-degenerate at every intermediate drag state.
   */
  moveHandle(id: HandleId, x: number, y: number): boolean {
    const cx = clamp(x, 0, this.width - 1);
    const cy = clamp(y, 0, this.height - 1);
    if (id === "nipple") {
      if (this.bbox === null) {
        this.bbox = [cx - DEFAULT_BBOX_HALF, cy - DEFAULT_BBOX_HALF, cx + DEFAULT_BBOX_HALF, cy + DEFAULT_BBOX_HALF];
      } else {
        const [x0, y0, x1, y1] = this.bbox;
        const dx = cx - (x0 + x1) / 2;
        const dy = cy - (y0 + y1) / 2;
        this.bbox = [x0 + dx, y0 + dy, x1 + dx, y1 + dy];
      }
      this.dirty = true;
      return true;
    }
    const other = this.pecs[id === "pec1" ? 1 : 0];
    if (other !== null && Math.hypot(cx - other.x, cy - other.y) < MIN_PEC_SEPARATION) {
      return false;
    }
    this.pecs[id === "pec1" ? 0 : 1] = { x: cx, y: cy };
    this.dirty = true;
    return true;
  }

  /** The triple sent to /api/verdict. Throws if a handle is missing. */
  landmarks(): LandmarkTriple {
    const n = this.nipple;
    const [a, b] = this.pecs;
    if (n === null || a === null || b === null) {
      throw new Error("annotation incomplete");
    }
    return {
      nipple: [n.x, n.y],
      pec1: [a.x, a.y],
      pec2: [b.x, b.y],
    };
  }

  loadFrom(record: AnnotationRecord): void {
    this.bbox = [...record.nipple_bbox];
    this.pecs = [
      { x: record.pectoral_line[0][0], y: record.pectoral_line[0][1] },
      { x: record.pectoral_line[1][0], y: record.pectoral_line[1][1] },
    ];
    this.revision = record.revision;
    this.dirty = false;
  }

  /** Body for PUT /api/annotations/{id}, carrying the revision we loaded. */
  saveBody(): AnnotationBody {
    const [a, b] = this.pecs;
    if (this.bbox === null || a === null || b === null) {
      throw new Error("annotation incomplete");
    }
    const line: [XY, XY] = [
      [a.x, a.y],
      [b.x, b.y],
    ];
    return { nipple_bbox: [...this.bbox], pectoral_line: line, revision: this.revision };
  }

  /** Record that the server accepted a save and returned this revision. */
  markSaved(revision: number): void {
    this.revision = revision;
    this.dirty = false;
  }
}

function clamp(v: number, lo: number, hi: number): number {
  return v < lo ? lo : v > hi ? hi : v;
}
