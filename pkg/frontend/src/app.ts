// DOM wiring for the analyst console: upload panel, canvas overlay, chat
// panel with one in-flight question at a time, overlay toggles, and a
// per-turn "cited regions" view backed by the gateway's grounding report.

import { ApiError, GatewayClient } from "./api";
import { displayScale, drawOverlay, type DrawingContext } from "./overlay";
import {
  initialState,
  questionFailed,
  questionPending,
  regionsLoaded,
  sessionStarted,
  toggleChanged,
  turnCompleted,
  type ViewState,
} from "./state";
import type { Mode } from "./types";
import type { Transcript } from "./types";

const MAX_CANVAS_W = 640;
const MAX_CANVAS_H = 480;

export interface AppHandles {
  state(): ViewState;
  transcript(): Transcript | null;
  uploadForm: HTMLFormElement;
  fileInput: HTMLInputElement;
  modeSelect: HTMLSelectElement;
  chatForm: HTMLFormElement;
  questionInput: HTMLInputElement;
  sendButton: HTMLButtonElement;
  turnList: HTMLOListElement;
  errorBar: HTMLDivElement;
  retryButton: HTMLButtonElement;
  detectionsToggle: HTMLInputElement;
  regionsToggle: HTMLInputElement;
  canvas: HTMLCanvasElement;
  showRegions(turnIndex: number): Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface AppOptions {
  // Seam for environments without 2D canvas support (jsdom tests).
  contextProvider?: (canvas: HTMLCanvasElement) => DrawingContext | null;
}

function defaultContextProvider(canvas: HTMLCanvasElement): DrawingContext | null {
  try {
    return canvas.getContext("2d") as DrawingContext | null;
  } catch {
    return null;
  }
}

export function createApp(
  root: HTMLElement,
  client: GatewayClient,
  options: AppOptions = {},
): AppHandles {
  const contextProvider = options.contextProvider ?? defaultContextProvider;
  let state = initialState();
  let transcript: Transcript | null = null;
  let lastQuestion: string | null = null;

  // --- skeleton ---------------------------------------------------------
  const uploadForm = el("form", "upload-form");
  const fileInput = el("input") as HTMLInputElement;
  fileInput.type = "file";
  fileInput.accept = "image/png,image/jpeg";
  const modeSelect = el("select") as HTMLSelectElement;
  for (const [value, label] of [
    ["with_boxes", "with ship boxes"],
    ["without_boxes", "without ship boxes"],
  ] as const) {
    const option = el("option", undefined, label) as HTMLOptionElement;
    option.value = value;
    modeSelect.appendChild(option);
  }
  const uploadButton = el("button", undefined, "Start session") as HTMLButtonElement;
  uploadButton.type = "submit";
  uploadForm.append(fileInput, modeSelect, uploadButton);

  const viewer = el("div", "viewer");
  const canvas = el("canvas", "overlay-canvas") as HTMLCanvasElement;
  viewer.appendChild(canvas);

  const togglesBar = el("div", "toggles");
  const detectionsToggle = el("input") as HTMLInputElement;
  detectionsToggle.type = "checkbox";
  detectionsToggle.checked = true;
  const regionsToggle = el("input") as HTMLInputElement;
  regionsToggle.type = "checkbox";
  regionsToggle.checked = true;
  const detLabel = el("label", undefined, " detections");
  detLabel.prepend(detectionsToggle);
  const regLabel = el("label", undefined, " answer regions");
  regLabel.prepend(regionsToggle);
  togglesBar.append(detLabel, regLabel);

  const errorBar = el("div", "error-bar") as HTMLDivElement;
  errorBar.hidden = true;
  const errorText = el("span", "error-text");
  const retryButton = el("button", "retry", "Retry") as HTMLButtonElement;
  errorBar.append(errorText, retryButton);

  const turnList = el("ol", "turns") as HTMLOListElement;
  turnList.start = 0;

  const chatForm = el("form", "chat-form") as HTMLFormElement;
  const questionInput = el("input", "question") as HTMLInputElement;
  questionInput.type = "text";
  questionInput.placeholder = "Ask about the scene...";
  const sendButton = el("button", undefined, "Send") as HTMLButtonElement;
  sendButton.type = "submit";
  chatForm.append(questionInput, sendButton);

  root.append(uploadForm, viewer, togglesBar, errorBar, turnList, chatForm);

  // --- rendering --------------------------------------------------------
  function redrawOverlay(): void {
    if (!state.session || !transcript) return;
    const scale = displayScale(state.session.imageW, state.session.imageH, MAX_CANVAS_W, MAX_CANVAS_H);
    canvas.width = Math.round(state.session.imageW * scale);
    canvas.height = Math.round(state.session.imageH * scale);
    const ctx = contextProvider(canvas);
    if (!ctx) return; // non-canvas environments (tests drive drawOverlay directly)
    const regions =
      state.selectedTurn !== null ? (state.regionsByTurn.get(state.selectedTurn) ?? []) : [];
    drawOverlay(
      ctx,
      state.session.imageW,
      state.session.imageH,
      scale,
      transcript.detections.boxes,
      regions,
      state.toggles,
    );
  }

  function renderTurns(): void {
    turnList.replaceChildren();
    for (const turn of state.turns) {
      const item = el("li", "turn");
      item.dataset.index = String(turn.index);
      const header = el("div", "turn-header", `turn ${turn.index}`);
      const user = el("div", "turn-user");
      user.textContent = turn.user_text;
      const answer = el("div", "turn-answer");
      answer.textContent = turn.answer_text;
      const regionsButton = el("button", "show-regions", "show cited regions") as HTMLButtonElement;
      regionsButton.type = "button";
      regionsButton.addEventListener("click", () => void showRegions(turn.index));
      item.append(header, user, answer, regionsButton);
      turnList.appendChild(item);
    }
  }

  function render(): void {
    sendButton.disabled = state.pending || !state.session;
    questionInput.disabled = state.pending || !state.session;
    errorBar.hidden = state.error === null;
    errorText.textContent = state.error ?? "";
    retryButton.hidden = lastQuestion === null;
    renderTurns();
    redrawOverlay();
  }

  function fail(err: unknown): void {
    const message =
      err instanceof ApiError ? `${err.type}: ${err.message}` : String(err);
    state = questionFailed(state, message);
    render();
  }

  // --- actions ----------------------------------------------------------
  async function startSession(): Promise<void> {
    const file = fileInput.files?.[0];
    if (!file) {
      state = { ...state, error: "choose an image first" };
      render();
      return;
    }
    const mode = modeSelect.value as Mode;
    try {
      state = questionPending(state);
      render();
      const created = await client.createSession(file, mode);
      transcript = await client.transcript(created.session_id);
      state = sessionStarted(state, transcript);
    } catch (err) {
      fail(err);
      return;
    }
    render();
  }

  async function sendQuestion(question: string): Promise<void> {
    if (!state.session) return;
    const sessionId = state.session.id;
    lastQuestion = question;
    try {
      state = questionPending(state);
      render();
      const turn = await client.ask(sessionId, question);
      state = turnCompleted(state, turn);
      if (transcript) transcript = { ...transcript, turns: [...state.turns] };
      lastQuestion = null;
      questionInput.value = "";
    } catch (err) {
      fail(err);
      return;
    }
    render();
  }

  async function showRegions(turnIndex: number): Promise<void> {
    if (!state.session) return;
    try {
      const report = await client.grounding(state.session.id, turnIndex);
      state = regionsLoaded(state, turnIndex, report.regions);
    } catch (err) {
      fail(err);
      return;
    }
    render();
  }

  uploadForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void startSession();
  });
  chatForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = questionInput.value.trim();
    if (question && !state.pending) void sendQuestion(question);
  });
  retryButton.addEventListener("click", () => {
    if (lastQuestion && !state.pending) void sendQuestion(lastQuestion);
  });
  detectionsToggle.addEventListener("change", () => {
    state = toggleChanged(state, "detections");
    redrawOverlay();
  });
  regionsToggle.addEventListener("change", () => {
    state = toggleChanged(state, "regions");
    redrawOverlay();
  });

  render();
  return {
    state: () => state,
    transcript: () => transcript,
    uploadForm,
    fileInput,
    modeSelect,
    chatForm,
    questionInput,
    sendButton,
    turnList,
    errorBar,
    retryButton,
    detectionsToggle,
    regionsToggle,
    canvas,
    showRegions,
  };
}
