/** The tag palette: one entry per scheme tag, in scheme order.
 *
 * Colors and keyboard keys are assigned positionally so they stay stable
 * across sessions for a given scheme (the scheme's tag order is part of
 * its content hash, so it cannot reorder silently).
 */

import type { SchemeWire } from "./schemas.js";

export interface PaletteEntry {
  name: string;
  definition: string;
  isIfid: boolean;
  color: string;
  /** Keyboard key that applies this tag to the selected token range. */
  key: string;
}

/** Distinguishable pastel backgrounds; cycles if a scheme has more tags. */
const COLORS = [
  "#ffd9a8", // warm orange
  "#b5e3b5", // green
  "#bcd7ff", // blue
  "#f3c4f0", // pink
  "#fff3a1", // yellow
  "#c9f0ee", // teal
  "#e2d4ff", // violet
  "#ffc9c9", // red
];

export function buildPalette(scheme: SchemeWire): PaletteEntry[] {
  return scheme.tags.map((tag, i) => ({
    name: tag.name,
    definition: tag.definition,
    isIfid: tag.is_ifid,
    color: COLORS[i % COLORS.length] as string,
    key: String((i + 1) % 10),
  }));
}

export function paletteByKey(palette: PaletteEntry[]): Map<string, PaletteEntry> {
  return new Map(palette.map((entry) => [entry.key, entry]));
}

export function paletteByName(palette: PaletteEntry[]): Map<string, PaletteEntry> {
  return new Map(palette.map((entry) => [entry.name, entry]));
}
