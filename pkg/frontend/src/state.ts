/** UI session state. The seed list is never edited locally: every mutation
 * goes through the server and the list is reconciled from the response, so
 * markers always equal the server's view. */

import type { Polarity, SessionResult } from "./api.js";

export type OverlayMode = "probability" | "mask" | "contour";

export interface UiState {
  sessionId: string | null;
  imageWidth: number;
  imageHeight: number;
  seeds: [number, number, Polarity][];
  tool: Polarity;
  overlayMode: OverlayMode;
  overlayOpacity: number;
  caption: string | null;
  iou: number | null;
  busy: boolean;
  lastResult: SessionResult | null;
  message: string | null;
}

export function initialState(): UiState {
  return {
    sessionId: null,
    imageWidth: 0,
    imageHeight: 0,
    seeds: [],
    tool: "positive",
    overlayMode: "probability",
    overlayOpacity: 0.5,
    caption: null,
    iou: null,
    busy: false,
    lastResult: null,
    message: null,
  };
}

/** Fold a server response into the state; the response is authoritative. */
export function applyResult(state: UiState, result: SessionResult): UiState {
  return {
    ...state,
    seeds: result.seeds.map(([x, y, p]) => [x, y, p]),
    caption: result.caption,
    iou: result.iou,
    lastResult: result,
    message: null,
  };
}

export function startSession(
  state: UiState,
  sessionId: string,
  width: number,
  height: number,
): UiState {
  return {
    ...initialState(),
    tool: state.tool,
    overlayMode: state.overlayMode,
    overlayOpacity: state.overlayOpacity,
    sessionId,
    imageWidth: width,
    imageHeight: height,
  };
}

export function setBusy(state: UiState, busy: boolean): UiState {
  return { ...state, busy };
}

export function setTool(state: UiState, tool: Polarity): UiState {
  return { ...state, tool };
}

export function setOverlayMode(state: UiState, overlayMode: OverlayMode): UiState {
  return { ...state, overlayMode };
}

export function setMessage(state: UiState, message: string | null): UiState {
  return { ...state, message };
}
