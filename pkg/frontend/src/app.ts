/** Browser entry point: wires the task queue to the DOM.
 *
 * Loads one bootstrap JSON (service base URL + annotator id), then runs
 * the annotate loop: show task, accept button clicks or key presses,
 * advance on server confirmation. All logic lives in the imported
 * modules so it stays testable off-DOM.
 */

import { ApiClient, parseBootstrap, Verdict, VERDICTS } from "./api.js";
import { verdictForKey } from "./keys.js";
import { renderPost } from "./latex.js";
import { QueueState, TaskQueue } from "./queue.js";

const LABELS: Record<Verdict, string> = {
  yes: "Yes (y)",
  no: "No (n)",
  no_answer: "No Answer (a)",
  not_sure: "Not Sure (u)",
};

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderState(state: QueueState, rawMode: boolean): void {
  el("progress").textContent =
    `${state.index} / ${state.total} done, ${state.remaining} pending`;
  el("error").textContent = state.lastError ?? "";
  const task = state.current;
  const buttons = document.querySelectorAll<HTMLButtonElement>("button.verdict");
  buttons.forEach((b) => (b.disabled = task === null));
  if (state.status === "done") {
    el("question").textContent = "All done. Thank you!";
    el("answers").textContent = "";
    el("posts").textContent = "";
    return;
  }
  if (!task) return;
  el("question").innerHTML = renderPost(task.question, rawMode);
  el("answers").innerHTML =
    `<p><b>Voted Answer:</b> ${renderPost(task.voted_answer ?? "(none)", rawMode)}</p>` +
    `<p><b>Original Answers:</b> ${task.original_answers
      .map((a) => renderPost(a, rawMode))
      .join(", ")}</p>`;
  el("posts").innerHTML = task.raw_posts
    .map(
      (p) =>
        `<div class="post"><b>#${p.post_number} ${p.author}</b>` +
        `${renderPost(p.body, rawMode)}</div>`,
    )
    .join("");
}

export async function start(): Promise<void> {
  const resp = await fetch("./bootstrap.json");
  const config = parseBootstrap(await resp.text());
  const queue = new TaskQueue(new ApiClient(config));
  let rawMode = false;

  const submit = async (value: Verdict) => {
    renderState(await queue.submit(value), rawMode);
  };

  const bar = el("buttons");
  for (const value of VERDICTS) {
    const button = document.createElement("button");
    button.className = "verdict";
    button.textContent = LABELS[value];
    button.addEventListener("click", () => void submit(value));
    bar.appendChild(button);
  }
  el("raw-toggle").addEventListener("click", () => {
    rawMode = !rawMode;
    renderState(queue.snapshot(), rawMode);
  });
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) return;
    const value = verdictForKey(event.key);
    if (value && queue.snapshot().status === "annotating") {
      void submit(value);
    }
  });

  renderState(await queue.load(), rawMode);
}

if (typeof document !== "undefined" && document.getElementById("buttons")) {
  void start();
}
