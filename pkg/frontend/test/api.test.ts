/* Exercises the typed client against a live service instance (started by
 * global_setup.ts). Annotation writes in this file stay on syn-00000 so
 * parallel test files cannot race on revisions.
 */

import { describe, expect, it } from "vitest";

import { ApiError, DegenerateLineError, StaleRevisionError } from "../src/api.js";
import { liveApi } from "./helpers.js";

const api = liveApi();

describe("cases and images", () => {
  it("lists the fixture cases with geometry-ready fields", async () => {
    const cases = await api.listCases();
    expect(cases.length).toBe(10);
    const ids = cases.map((c) => c.case_id);
    expect(ids).toContain("syn-00000");
    expect(ids).toEqual([...ids].sort());
    for (const c of cases) {
      expect(c.width).toBe(160);
      expect(c.height).toBe(160);
      expect(["L", "R"]).toContain(c.laterality);
      expect(c.pixel_spacing.length).toBe(2);
      expect(c.revision).toBeGreaterThanOrEqual(0);
      expect(["good", "poor", null]).toContain(c.label);
    }
  });

  it("serves case images as PNG", async () => {
    const resp = await fetch(api.imageUrl("syn-00001"));
    expect(resp.status).toBe(200);
    expect(resp.headers.get("content-type")).toBe("image/png");
    const bytes = new Uint8Array(await resp.arrayBuffer());
    expect([...bytes.slice(0, 4)]).toEqual([137, 80, 78, 71]);
  });

  it("404s on unknown case ids", async () => {
    await expect(api.getAnnotation("nope")).rejects.toThrowError(ApiError);
    await expect(api.getAnnotation("nope")).rejects.toMatchObject({ status: 404 });
    const resp = await fetch(api.imageUrl("nope"));
    expect(resp.status).toBe(404);
  });
});

describe("verdict endpoint", () => {
  it("reproduces the vertical-line worked example", async () => {
    const v = await api.verdict({
      landmarks: { nipple: [200, 256], pec1: [100, 400], pec2: [100, 50] },
      shape: [512, 512],
      laterality: "L",
    });
    expect(v.label).toBe("good");
    expect(v.in_bounds).toBe(true);
    expect(v.foot).toEqual([100, 256]);
    expect(v.angle_deg).toBeCloseTo(0, 9);
    expect(v.pnl.start).toEqual([200, 256]);
    expect(v.pnl.end).toEqual([100, 256]);
  });

  it("mirrors the angle for right laterality", async () => {
    const landmarks = {
      nipple: [350, 250] as [number, number],
      pec1: [50, 250] as [number, number],
      pec2: [250, 450] as [number, number], // pointing down-right
    };
    const left = await api.verdict({ landmarks, shape: [512, 512], laterality: "L" });
    const right = await api.verdict({ landmarks, shape: [512, 512], laterality: "R" });
    expect(left.angle_deg).toBeCloseTo(45, 9);
    expect(right.angle_deg).toBeCloseTo(135, 9);
    expect(left.foot).toEqual(right.foot); // mirroring changes the readout only
  });

  it("flags a coincident pectoral line as degenerate", async () => {
    await expect(
      api.verdict({
        landmarks: { nipple: [80, 80], pec1: [30, 30], pec2: [30, 30] },
        shape: [160, 160],
        laterality: "L",
      }),
    ).rejects.toThrowError(DegenerateLineError);
  });

  it("rejects malformed requests with a 400", async () => {
    const resp = await fetch(process.env.REVIEW_UI_BASE_URL + "/api/verdict", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ landmarks: { nipple: [1, 2] }, shape: [160, 160] }),
    });
    expect(resp.status).toBe(400);
  });
});

describe("annotation endpoints", () => {
  it("walks the revision lifecycle and rejects stale writes", async () => {
    const caseId = "syn-00000";
    const first = await api.getAnnotation(caseId);
    expect(first.revision).toBe(0); // dataset annotation, nothing saved yet

    const edited = {
      nipple_bbox: [40.5, 41.25, 60.5, 61.25] as [number, number, number, number],
      pectoral_line: [
        [20.125, 150.625],
        [55.5, 8.75],
      ] as [[number, number], [number, number]],
      revision: first.revision,
    };
    const putRes = await api.putAnnotation(caseId, edited);
    expect(putRes.revision).toBe(1);

    const reread = await api.getAnnotation(caseId);
    expect(reread.revision).toBe(1);
    expect(reread.nipple_bbox).toEqual(edited.nipple_bbox);
    expect(reread.pectoral_line).toEqual(edited.pectoral_line);

    // writing against the stale revision 0 must fail and name the current one
    let failure: unknown = null;
    try {
      await api.putAnnotation(caseId, { ...edited, revision: 0 });
    } catch (e) {
      failure = e;
    }
    expect(failure).toBeInstanceOf(StaleRevisionError);
    expect((failure as StaleRevisionError).currentRevision).toBe(1);

    // and the case listing reflects the new revision
    const cases = await api.listCases();
    expect(cases.find((c) => c.case_id === caseId)?.revision).toBe(1);
  });
});

describe("predict endpoint", () => {
  it("predicts a stored case and compares against its annotation", async () => {
    const p = await api.predictCase("syn-00001");
    expect(p.case_id).toBe("syn-00001");
    for (const lm of [p.landmarks, p.annotation]) {
      for (const pt of [lm.nipple, lm.pec1, lm.pec2]) {
        expect(pt.length).toBe(2);
        expect(Number.isFinite(pt[0])).toBe(true);
        expect(Number.isFinite(pt[1])).toBe(true);
      }
    }
    expect(["good", "poor"]).toContain(p.verdict.label);
    for (const v of Object.values(p.errors)) {
      expect(Number.isFinite(v)).toBe(true);
      expect(v).toBeGreaterThanOrEqual(0);
    }
    expect(p.annotation_revision).toBe(0);
  });

  it("404s for an unknown case", async () => {
    await expect(api.predictCase("nope")).rejects.toMatchObject({ status: 404 });
  });
});
