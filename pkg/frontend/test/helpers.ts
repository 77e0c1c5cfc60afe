import { ReviewApi } from "../src/api.js";

export function liveApi(): ReviewApi {
  const base = process.env.REVIEW_UI_BASE_URL;
  if (!base) {
    throw new Error("REVIEW_UI_BASE_URL not set; the global setup did not run");
  }
  return new ReviewApi(base);
}
