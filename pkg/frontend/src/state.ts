// View state for one analyst session. The turn list mirrors the server
// transcript order, overlay toggles are purely client-side, and at most one
// question is in flight at a time.

import type { AnswerRegion, Mode, Transcript, Turn } from "./types";
import type { OverlayToggles } from "./overlay";

export interface SessionDescriptor {
  id: string;
  imageW: number;
  imageH: number;
  mode: Mode;
}

export interface ViewState {
  session: SessionDescriptor | null;
  turns: Turn[];
  toggles: OverlayToggles;
  pending: boolean;
  regionsByTurn: Map<number, AnswerRegion[]>;
  selectedTurn: number | null;
  error: string | null;
}

export function initialState(): ViewState {
  return {
    session: null,
    turns: [],
    toggles: { detections: true, regions: true },
    pending: false,
    regionsByTurn: new Map(),
    selectedTurn: null,
    error: null,
  };
}

export function sessionStarted(state: ViewState, transcript: Transcript): ViewState {
  return {
    ...state,
    session: {
      id: transcript.session_id,
      imageW: transcript.image.w,
      imageH: transcript.image.h,
      mode: transcript.mode,
    },
    turns: [...transcript.turns],
    regionsByTurn: new Map(),
    selectedTurn: null,
    pending: false,
    error: null,
  };
}

export function questionPending(state: ViewState): ViewState {
  if (state.pending) throw new Error("a question is already in flight");
  return { ...state, pending: true, error: null };
}

export function turnCompleted(state: ViewState, turn: Turn): ViewState {
  if (turn.index !== state.turns.length) {
    throw new Error(
      `turn out of order: got index ${turn.index}, expected ${state.turns.length}`,
    );
  }
  return { ...state, turns: [...state.turns, turn], pending: false };
}

export function questionFailed(state: ViewState, message: string): ViewState {
  return { ...state, pending: false, error: message };
}

export function toggleChanged(state: ViewState, key: keyof OverlayToggles): ViewState {
  return { ...state, toggles: { ...state.toggles, [key]: !state.toggles[key] } };
}

export function regionsLoaded(
  state: ViewState,
  turnIndex: number,
  regions: AnswerRegion[],
): ViewState {
  const map = new Map(state.regionsByTurn);
  map.set(turnIndex, regions);
  return { ...state, regionsByTurn: map, selectedTurn: turnIndex };
}
