/**
 * Half-split before/after comparator: both images stacked, the top (after)
 * clipped to the left of a draggable divider.
 */

export interface Comparator {
  root: HTMLElement;
  setImages(beforeUrl: string, afterUrl: string): void;
  setSplit(fraction: number): void;
  getSplit(): number;
}

export function createComparator(doc: Document = document): Comparator {
  const root = doc.createElement("div");
  root.className = "compare";

  const before = doc.createElement("img");
  before.className = "compare-before";
  before.alt = "before";
  const after = doc.createElement("img");
  after.className = "compare-after";
  after.alt = "after";
  const divider = doc.createElement("div");
  divider.className = "compare-divider";

  root.append(before, after, divider);

  let split = 0.5;
  const apply = () => {
    const pct = split * 100;
    after.style.clipPath = `inset(0 ${100 - pct}% 0 0)`;
    divider.style.left = `${pct}%`;
  };
  apply();

  let dragging = false;
  const fromEvent = (ev: PointerEvent) => {
    const rect = root.getBoundingClientRect();
    if (rect.width === 0) return split;
    return Math.min(1, Math.max(0, (ev.clientX - rect.left) / rect.width));
  };
  divider.addEventListener("pointerdown", (ev) => {
    dragging = true;
    divider.setPointerCapture?.(ev.pointerId);
  });
  root.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    split = fromEvent(ev);
    apply();
  });
  root.addEventListener("pointerup", () => {
    dragging = false;
  });

  return {
    root,
    setImages(beforeUrl, afterUrl) {
      before.src = beforeUrl;
      after.src = afterUrl;
    },
    setSplit(fraction) {
      split = Math.min(1, Math.max(0, fraction));
      apply();
    },
    getSplit: () => split,
  };
}
