/* Prediction-vs-annotation compare pane state.
 *
 * Red is the model prediction, blue the saved annotation. The per-landmark
 * millimetre errors and the angular error are shown exactly as the server
 * computed them; nothing is recomputed here.
 */

import { NoModelError } from "./api.js";
import type { CasePrediction, ReviewApi } from "./api.js";

export type CompareState =
  | { kind: "hidden" }
  | { kind: "loading" }
  | { kind: "ready"; prediction: CasePrediction }
  | { kind: "no-model"; message: string }
  | { kind: "error"; message: string };

type PredictApi = Pick<ReviewApi, "predictCase">;

export class CompareDriver {
  state: CompareState = { kind: "hidden" };

  constructor(
    private readonly api: PredictApi,
    private readonly onChange: (s: CompareState) => void = () => {},
  ) {}

  hide(): void {
    this.set({ kind: "hidden" });
  }

  async show(caseId: string): Promise<void> {
    this.set({ kind: "loading" });
    try {
      const prediction = await this.api.predictCase(caseId);
      this.set({ kind: "ready", prediction });
    } catch (e) {
      if (e instanceof NoModelError) {
        this.set({ kind: "no-model", message: "no model loaded" });
      } else {
        this.set({ kind: "error", message: e instanceof Error ? e.message : String(e) });
      }
    }
  }

  private set(s: CompareState): void {
    this.state = s;
    this.onChange(s);
  }
}
