/** Small LaTeX-to-HTML renderer for forum posts.
 *
 * Handles the constructs that dominate math-forum text: inline and
 * display math delimiters, fractions, superscripts, subscripts, roots,
 * \boxed, and common symbol macros. Anything it cannot parse is left
 * as escaped raw text, and callers can force raw mode entirely for
 * posts with broken markup.
 */

const SYMBOLS: Record<string, string> = {
  "\\cdot": "·",
  "\\times": "×",
  "\\pm": "±",
  "\\le": "≤",
  "\\leq": "≤",
  "\\ge": "≥",
  "\\geq": "≥",
  "\\ne": "≠",
  "\\neq": "≠",
  "\\pi": "π",
  "\\theta": "θ",
  "\\alpha": "α",
  "\\beta": "β",
  "\\infty": "∞",
  "\\sum": "Σ",
  "\\int": "∫",
  "\\sqrt": "√",
  "\\circ": "°",
  "\\ldots": "…",
  "\\dots": "…",
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function braceGroup(src: string, open: number): [string, number] | null {
  if (src[open] !== "{") return null;
  let depth = 0;
  for (let i = open; i < src.length; i++) {
    if (src[i] === "{") depth += 1;
    else if (src[i] === "}") {
      depth -= 1;
      if (depth === 0) return [src.slice(open + 1, i), i + 1];
    }
  }
  return null;
}

function renderMath(src: string): string {
  let out = "";
  let i = 0;
  while (i < src.length) {
    const ch = src[i];
    if (ch === "\\") {
      const macro = /^\\[a-zA-Z]+/.exec(src.slice(i));
      if (macro) {
        const name = macro[0];
        const after = i + name.length;
        if (name === "\\frac") {
          const num = braceGroup(src, after);
          const den = num && braceGroup(src, num[1]);
          if (num && den) {
            out += `<span class="frac">(${renderMath(num[0])})/(${renderMath(den[0])})</span>`;
            i = den[1];
            continue;
          }
        }
        if (name === "\\sqrt") {
          const arg = braceGroup(src, after);
          if (arg) {
            out += `√(${renderMath(arg[0])})`;
            i = arg[1];
            continue;
          }
        }
        if (name === "\\boxed") {
          const arg = braceGroup(src, after);
          if (arg) {
            out += `<span class="boxed">${renderMath(arg[0])}</span>`;
            i = arg[1];
            continue;
          }
        }
        if (name in SYMBOLS) {
          out += SYMBOLS[name];
          i = after;
          continue;
        }
        out += escapeHtml(name);
        i = after;
        continue;
      }
    }
    if (ch === "^" || ch === "_") {
      const tag = ch === "^" ? "sup" : "sub";
      const grp = braceGroup(src, i + 1);
      if (grp) {
        out += `<${tag}>${renderMath(grp[0])}</${tag}>`;
        i = grp[1];
      } else if (i + 1 < src.length) {
        out += `<${tag}>${escapeHtml(src[i + 1])}</${tag}>`;
        i += 2;
      } else {
        i += 1;
      }
      continue;
    }
    out += escapeHtml(ch);
    i += 1;
  }
  return out;
}

/** Render a post body: math segments typeset, prose escaped. */
export function renderPost(text: string, rawMode = false): string {
  if (rawMode) return `<pre>${escapeHtml(text)}</pre>`;
  const pieces: string[] = [];
  // split on $$...$$ first, then $...$ within prose pieces
  const parts = text.split(/\$\$([^$]*)\$\$|\$([^$\n]*)\$/g);
  for (let i = 0; i < parts.length; i += 3) {
    pieces.push(escapeHtml(parts[i] ?? ""));
    const display = parts[i + 1];
    const inline = parts[i + 2];
    if (display !== undefined) {
      pieces.push(`<div class="math">${renderMath(display)}</div>`);
    } else if (inline !== undefined) {
      pieces.push(`<span class="math">${renderMath(inline)}</span>`);
    }
  }
  return pieces.join("");
}
