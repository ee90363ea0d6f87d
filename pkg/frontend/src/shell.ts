/** Thin DOM shell wiring the state machine and API client to the page.
 * All logic lives in the DOM-free modules; this file only reflects state into
 * elements and forwards user intent. */

import { ApiClient } from "./api.js";
import { StudioState } from "./state.js";
import type { RunEvent } from "./events.js";

const STYLES = ["default", "classic", "wizard_green"];

// Generated pages run in a sandboxed frame: scripts allowed (pages are
// interactive by design) but no access to the studio shell or navigation.
const FRAME_SANDBOX = "allow-scripts";

export function mountStudio(root: HTMLElement): void {
  const api = new ApiClient((url, init) => fetch(url, init));
  const state = new StudioState();

  root.innerHTML = `
    <form id="compose">
      <input id="prompt" placeholder="Describe the page you want" autofocus>
      <select id="style">
        ${STYLES.map((s) => `<option value="${s}">${s}</option>`).join("")}
      </select>
      <button type="submit">Generate</button>
    </form>
    <div id="phase"></div>
    <div id="error" hidden></div>
    <iframe id="view" sandbox="${FRAME_SANDBOX}"></iframe>
    <form id="followup" hidden>
      <input id="instruction" placeholder="Follow-up instruction">
      <button type="submit">Refine</button>
    </form>
  `;

  const el = <T extends HTMLElement>(id: string): T =>
    root.querySelector(`#${id}`) as T;
  const frame = el<HTMLIFrameElement>("view");

  function render(): void {
    el("phase").textContent = state.phase === "idle" ? "" : state.phase;
    const failureBox = el("error");
    if (state.failure) {
      failureBox.hidden = false;
      const kind = state.failure.errorKind ?? state.failure.reason;
      failureBox.innerHTML =
        `generation failed: <code>${kind}</code> ` +
        (state.failure.rawArtifactUrl
          ? `<a href="${state.failure.rawArtifactUrl}" download>raw output</a>`
          : "");
    } else {
      failureBox.hidden = true;
    }
    const url = state.pageUrl();
    if (url && frame.getAttribute("src") !== url) {
      frame.removeAttribute("srcdoc");
      frame.src = url;
    } else if (!url) {
      frame.srcdoc = state.previewBuffer;
    }
    el("followup").hidden = !state.followUpEnabled;
  }

  async function run(prompt: string, sessionId?: string | null): Promise<void> {
    const accepted = await api.generate(prompt, state.style, sessionId);
    state.beginRun(accepted.run_id, accepted.session_id);
    render();
    await api.streamEvents(accepted.run_id, (event: RunEvent) => {
      state.apply(event);
      if (event.kind === "failed" && state.failure) {
        state.failure.rawArtifactUrl =
          `/api/pages/${state.finalPageId ?? ""}/artifact`;
      }
      render();
    });
    render();
  }

  el("compose").addEventListener("submit", (e) => {
    e.preventDefault();
    const prompt = el<HTMLInputElement>("prompt").value.trim();
    state.setStyle(el<HTMLSelectElement>("style").value);
    if (prompt && !state.runActive) void run(prompt);
  });

  el("followup").addEventListener("submit", (e) => {
    e.preventDefault();
    const instruction = el<HTMLInputElement>("instruction").value.trim();
    if (instruction && state.followUpEnabled) {
      void run(instruction, state.sessionId);
    }
  });
}
