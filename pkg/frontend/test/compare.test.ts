/* Compare-pane state driver, against both the live service (happy path,
 * revision tracking; owns syn-00004) and stubs for the failure modes the
 * fixture server cannot produce (it always has a model loaded).
 */

import { describe, expect, it } from "vitest";

import { ApiError, NoModelError } from "../src/api.js";
import type { CasePrediction } from "../src/api.js";
import { CompareDriver } from "../src/compare.js";
import type { CompareState } from "../src/compare.js";
import { liveApi } from "./helpers.js";

const api = liveApi();

function ready(state: CompareState): CasePrediction {
  expect(state.kind).toBe("ready");
  if (state.kind !== "ready") throw new Error("unreachable");
  return state.prediction;
}

describe("CompareDriver against the live service", () => {
  it("loads red-vs-blue landmarks with the server's error numbers", async () => {
    const driver = new CompareDriver(api);
    await driver.show("syn-00004");
    const p = ready(driver.state);
    expect(p.case_id).toBe("syn-00004");

    // blue side: the effective annotation, reduced the same way the server
    // reduces it (bbox centre nipple, lower pectoral endpoint first)
    const ann = await api.getAnnotation("syn-00004");
    const [x0, y0, x1, y1] = ann.nipple_bbox;
    expect(p.annotation.nipple).toEqual([(x0 + x1) / 2, (y0 + y1) / 2]);
    const [a, b] = ann.pectoral_line;
    const lower = a[1] >= b[1] ? a : b;
    const upper = a[1] >= b[1] ? b : a;
    expect(p.annotation.pec1).toEqual(lower);
    expect(p.annotation.pec2).toEqual(upper);

    for (const v of Object.values(p.errors)) {
      expect(Number.isFinite(v)).toBe(true);
      expect(v).toBeGreaterThanOrEqual(0);
    }
  });

  it("tracks a freshly saved annotation and its revision", async () => {
    const before = await api.getAnnotation("syn-00004");
    const saved = {
      nipple_bbox: [70.5, 72.25, 90.5, 92.25] as [number, number, number, number],
      // first endpoint has the larger y, matching the canonical pec1 order
      pectoral_line: [
        [30.75, 150.5],
        [60.25, 12.125],
      ] as [[number, number], [number, number]],
      revision: before.revision,
    };
    const res = await api.putAnnotation("syn-00004", saved);

    const driver = new CompareDriver(api);
    await driver.show("syn-00004");
    const p = ready(driver.state);
    expect(p.annotation_revision).toBe(res.revision);
    expect(p.annotation.nipple).toEqual([80.5, 82.25]);
    expect(p.annotation.pec1).toEqual(saved.pectoral_line[0]);
    expect(p.annotation.pec2).toEqual(saved.pectoral_line[1]);
  });
});

describe("CompareDriver failure modes", () => {
  it("shows the no-model message on a 503", async () => {
    const stub = {
      predictCase: () => Promise.reject(new NoModelError(503, "no model loaded")),
    };
    const states: CompareState[] = [];
    const driver = new CompareDriver(stub, (s) => states.push(s));
    await driver.show("syn-00000");
    expect(driver.state).toEqual({ kind: "no-model", message: "no model loaded" });
    expect(states.map((s) => s.kind)).toEqual(["loading", "no-model"]);
  });

  it("reports other failures distinctly", async () => {
    const stub = {
      predictCase: () => Promise.reject(new ApiError(500, "boom")),
    };
    const driver = new CompareDriver(stub);
    await driver.show("syn-00000");
    expect(driver.state.kind).toBe("error");
  });

  it("passes the server's error numbers through untouched", async () => {
    // identical prediction and annotation: every error is exactly zero
    const zero: CasePrediction = {
      case_id: "c",
      landmarks: { nipple: [10, 10], pec1: [5, 30], pec2: [8, 2] },
      verdict: {
        foot: [6, 12],
        in_bounds: true,
        label: "good",
        angle_deg: 3,
        pnl: { start: [10, 10], end: [6, 12] },
      },
      annotation: { nipple: [10, 10], pec1: [5, 30], pec2: [8, 2] },
      annotation_revision: 2,
      errors: { perp_mm: 0, pec1_mm: 0, pec2_mm: 0, nipple_mm: 0, angular_deg: 0 },
    };
    const driver = new CompareDriver({ predictCase: () => Promise.resolve(zero) });
    await driver.show("c");
    const p = ready(driver.state);
    expect(p.errors).toEqual({ perp_mm: 0, pec1_mm: 0, pec2_mm: 0, nipple_mm: 0, angular_deg: 0 });
    expect(p.landmarks).toEqual(p.annotation);
  });

  it("hides on demand", async () => {
    const driver = new CompareDriver({ predictCase: () => Promise.reject(new ApiError(500, "x")) });
    await driver.show("c");
    driver.hide();
    expect(driver.state).toEqual({ kind: "hidden" });
  });
});
