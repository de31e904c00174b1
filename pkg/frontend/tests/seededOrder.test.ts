import { describe, expect, it } from "vitest";

import { displayOrder, displaySwapped, fnv1a } from "../src/seededOrder.js";

describe("seeded display order", () => {
  it("is deterministic per pair id", () => {
    for (const id of ["p1", "abcdef", "0f3a9c", ""]) {
      expect(displaySwapped(id)).toBe(displaySwapped(id));
      expect(fnv1a(id)).toBe(fnv1a(id));
    }
  });

  it("produces both orientations across many ids", () => {
    const flips = new Set<boolean>();
    for (let k = 0; k < 64; k++) flips.add(displaySwapped(`pair_${k}`));
    expect(flips).toEqual(new Set([true, false]));
  });

  it("maps displayed positions back to server sides", () => {
    for (let k = 0; k < 32; k++) {
      const id = `pair_${k}`;
      const order = displayOrder(id, "/images/L", "/images/R");
      const swapped = displaySwapped(id);
      expect(order.firstUrl).toBe(swapped ? "/images/R" : "/images/L");
      expect(order.secondUrl).toBe(swapped ? "/images/L" : "/images/R");
      // clicking the slot that shows the server-left image reports "left"
      const firstShowsLeft = order.firstUrl === "/images/L";
      expect(order.sideFor("first")).toBe(firstShowsLeft ? "left" : "right");
      expect(order.sideFor("second")).toBe(firstShowsLeft ? "right" : "left");
    }
  });
});
