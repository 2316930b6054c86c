/** Explorer session state: slider values, selection, and the append-only
 * evidence history. Pure functions so the behavior is unit-testable. */

import type { EvidenceResponse } from "./api.js";

export const ETA1_LOG_MIN = -3; // eta1 slider is log10-scaled over [1e-3, 1e2]
export const ETA1_LOG_MAX = 2;
export const ETA_LINEAR_MAX = 2; // eta2, eta3 live in [0, 2]

export interface SliderValues {
  eta1Log: number;
  eta2: number;
  eta3: number;
  entropySign: "minimize" | "maximize";
}

export interface ExplorerState {
  modelId: string | null;
  sampleId: string | null;
  sliders: SliderValues;
  history: EvidenceResponse[];
  requestCounter: number;
  appliedRequest: number;
}

export function initialState(): ExplorerState {
  return {
    modelId: null,
    sampleId: null,
    sliders: { eta1Log: -1, eta2: 0.5, eta3: 0.2, entropySign: "minimize" },
    history: [],
    requestCounter: 0,
    appliedRequest: 0,
  };
}

export function clampSliders(values: SliderValues): SliderValues {
  const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));
  return {
    eta1Log: clamp(values.eta1Log, ETA1_LOG_MIN, ETA1_LOG_MAX),
    eta2: clamp(values.eta2, 0, ETA_LINEAR_MAX),
    eta3: clamp(values.eta3, 0, ETA_LINEAR_MAX),
    entropySign: values.entropySign,
  };
}

export function eta1FromSlider(eta1Log: number): number {
  return Math.pow(10, eta1Log);
}

export function selectSample(state: ExplorerState, sampleId: string): ExplorerState {
  // a fresh anchor starts a fresh evidence history
  return { ...state, sampleId, history: [] };
}

export function selectModel(state: ExplorerState, modelId: string): ExplorerState {
  return { ...state, modelId, history: [] };
}

export function setSliders(state: ExplorerState, values: SliderValues): ExplorerState {
  return { ...state, sliders: clampSliders(values) };
}

/** Mark the start of an in-flight counterfactual request; returns its token. */
export function issueRequest(state: ExplorerState): [ExplorerState, number] {
  const token = state.requestCounter + 1;
  return [{ ...state, requestCounter: token }, token];
}

/** Latest-wins: a response is applied only if no newer request was issued. */
export function shouldApply(state: ExplorerState, token: number): boolean {
  return token > state.appliedRequest && token === state.requestCounter;
}

export function appendEvidence(
  state: ExplorerState,
  token: number,
  evidence: EvidenceResponse,
): ExplorerState {
  if (!shouldApply(state, token)) {
    return state; // a newer request superseded this response
  }
  return {
    ...state,
    appliedRequest: token,
    history: [...state.history, evidence], // append-only within the session
  };
}
