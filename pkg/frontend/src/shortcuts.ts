// Keyboard labeling: digits 0-9 assign a class to the focused card,
// "s" skips it, arrows move focus. Focus advances to the next unlabeled
// card after each action.

import { LabelValue } from "./api.js";

export interface ShortcutTarget {
  focusedId: number | null;
  orderedIds: number[];        // unlabeled card ids in display order
  numClasses: number;
}

export type ShortcutAction =
  | { kind: "label"; value: LabelValue }
  | { kind: "focus"; id: number };

export function interpretKey(key: string, target: ShortcutTarget): ShortcutAction | null {
  if (/^[0-9]$/.test(key)) {
    const cls = Number(key);
    if (cls >= target.numClasses) return null;
    return { kind: "label", value: cls };
  }
  if (key === "s") return { kind: "label", value: "skip" };
  if (key === "ArrowRight" || key === "ArrowLeft") {
    const ids = target.orderedIds;
    if (!ids.length) return null;
    const pos = target.focusedId === null ? -1 : ids.indexOf(target.focusedId);
    const step = key === "ArrowRight" ? 1 : -1;
    const next = ids[(pos + step + ids.length) % ids.length];
    return { kind: "focus", id: next };
  }
  return null;
}

/** Next card to focus after `labeledId` got its label. */
export function nextFocus(labeledId: number, orderedIds: number[]): number | null {
  const remaining = orderedIds.filter((id) => id !== labeledId);
  if (!remaining.length) return null;
  const after = remaining.find((id) => id > labeledId);
  return after ?? remaining[0];
}
