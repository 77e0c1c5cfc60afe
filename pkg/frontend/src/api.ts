/* Typed client for the review service HTTP API.
 *
 * All coordinates cross the wire as [x, y] arrays in native image pixels;
 * nothing in this file transforms them. Non-2xx responses are mapped to
 * ApiError subclasses so callers can branch on the failure mode instead of
 * matching status codes everywhere.
 */

export type XY = [number, number];
export type Laterality = "L" | "R";
export type Label = "good" | "poor";

export interface LandmarkTriple {
  nipple: XY;
  pec1: XY;
  pec2: XY;
}

export interface VerdictRequest {
  landmarks: LandmarkTriple;
  shape: [number, number]; // width, height
  laterality: Laterality;
}

export interface Verdict {
  foot: XY;
  in_bounds: boolean;
  label: Label;
  angle_deg: number;
  pnl: { start: XY; end: XY };
}

export interface CaseSummary {
  case_id: string;
  exam_id: string;
  laterality: Laterality;
  width: number;
  height: number;
  pixel_spacing: [number, number];
  revision: number;
  label: Label | null;
}

export interface AnnotationRecord {
  case_id: string;
  revision: number;
  nipple_bbox: [number, number, number, number];
  pectoral_line: [XY, XY];
}

export interface AnnotationBody {
  nipple_bbox: [number, number, number, number];
  pectoral_line: [XY, XY];
  revision: number;
}

export interface LandmarkErrors {
  perp_mm: number;
  pec1_mm: number;
  pec2_mm: number;
  nipple_mm: number;
  angular_deg: number;
}

export interface CasePrediction {
  case_id: string;
  landmarks: LandmarkTriple;
  verdict: Verdict;
  annotation: LandmarkTriple;
  annotation_revision: number;
  errors: LandmarkErrors;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = new.target.name;
  }
}

/** 422: the two pectoral points coincide. */
export class DegenerateLineError extends ApiError {}

/** 503: the service was started without a model bundle. */
export class NoModelError extends ApiError {}

/** 409: someone saved this case since we loaded it. */
export class StaleRevisionError extends ApiError {
  constructor(status: number, detail: string, readonly currentRevision: number) {
    super(status, detail);
  }
}

function detailText(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const d = (body as { detail: unknown }).detail;
    return typeof d === "string" ? d : JSON.stringify(d);
  }
  return "unexpected error";
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let body: unknown = null;
  try {
    body = await resp.json();
  } catch {
    // non-JSON error body; detailText falls back to a generic message
  }
  const detail = detailText(body);
  if (resp.status === 409) {
    const current = Number((body as { revision?: number } | null)?.revision ?? -1);
    throw new StaleRevisionError(resp.status, detail, current);
  }
  if (resp.status === 422) throw new DegenerateLineError(resp.status, detail);
  if (resp.status === 503) throw new NoModelError(resp.status, detail);
  throw new ApiError(resp.status, detail);
}

export class ReviewApi {
  private readonly fetchFn: typeof fetch;

  constructor(readonly baseUrl = "", fetchFn: typeof fetch = fetch) {
    // bind so a browser's window.fetch is not called with us as `this`
    this.fetchFn = fetchFn.bind(globalThis);
  }

  verdict(req: VerdictRequest): Promise<Verdict> {
    return this.postJson("/api/verdict", req);
  }

  listCases(): Promise<CaseSummary[]> {
    return this.getJson("/api/cases");
  }

  getAnnotation(caseId: string): Promise<AnnotationRecord> {
    return this.getJson(`/api/annotations/${encodeURIComponent(caseId)}`);
  }

  async putAnnotation(
    caseId: string,
    body: AnnotationBody,
  ): Promise<{ case_id: string; revision: number }> {
    const resp = await this.fetchFn(this.baseUrl + `/api/annotations/${encodeURIComponent(caseId)}`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return unwrap(resp);
  }

  predictCase(caseId: string): Promise<CasePrediction> {
    return this.postJson("/api/predict", { case_id: caseId });
  }

  imageUrl(caseId: string): string {
    return this.baseUrl + `/api/images/${encodeURIComponent(caseId)}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    return unwrap(resp);
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return unwrap(resp);
  }
}
