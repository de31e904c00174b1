/**
 * Deterministic left/right display placement.
 *
 * The pair id seeds an FNV-1a hash; the low bit decides whether the pair is
 * shown swapped. Reproducible for any analyst holding the pair id, yet
 * uncorrelated with the server's own left/right assignment.
 */

export function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function displaySwapped(pairId: string): boolean {
  return (fnv1a(pairId) & 1) === 1;
}

export interface DisplayOrder {
  firstUrl: string;
  secondUrl: string;
  /** Maps a displayed position back to the server-side name. */
  sideFor(position: "first" | "second"): "left" | "right";
}

export function displayOrder(
  pairId: string,
  leftUrl: string,
  rightUrl: string,
): DisplayOrder {
  const swapped = displaySwapped(pairId);
  return {
    firstUrl: swapped ? rightUrl : leftUrl,
    secondUrl: swapped ? leftUrl : rightUrl,
    sideFor: (position) =>
      (position === "first") !== swapped ? "left" : "right",
  };
}
