/** Keyboard shortcuts: y / n / a / u map to the four verdicts. */

import { Verdict } from "./api.js";

const BINDINGS: Record<string, Verdict> = {
  y: "yes",
  n: "no",
  a: "no_answer",
  u: "not_sure",
};

/** Returns the verdict for a key press, or null when unbound. */
export function verdictForKey(key: string): Verdict | null {
  return BINDINGS[key.toLowerCase()] ?? null;
}
