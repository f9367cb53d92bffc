import type { AppConfig } from './types.js'

export const defaultConfig: AppConfig = {
  serviceUrl: 'http://127.0.0.1:8756',
  urlTemplate: 'http://127.0.0.1:9123/wmts/{layer}/default/{date}/{matrix}/{row}/{col}.jpg',
  layer: 'demo',
  date: '2020-01-01',
  level: 3,
  k: 20,
}

/**
 * Effective config: defaults, overridden by a `SNIP_UI_CONFIG` global (set by
 * the hosting page before the app script loads), overridden by explicit
 * arguments. All three layers are partial.
 */
export function loadConfig(overrides?: Partial<AppConfig>): AppConfig {
  const fromPage = (globalThis as { SNIP_UI_CONFIG?: Partial<AppConfig> }).SNIP_UI_CONFIG
  return { ...defaultConfig, ...fromPage, ...overrides }
}

/** Substitute one tile's coordinates into a URL template. */
export function resolveTileUrl(
  template: string,
  tile: { layer: string; date: string; matrix: number; row: number; col: number },
): string {
  return template
    .replaceAll('{layer}', tile.layer)
    .replaceAll('{date}', tile.date)
    .replaceAll('{matrix}', String(tile.matrix))
    .replaceAll('{row}', String(tile.row))
    .replaceAll('{col}', String(tile.col))
}

/** Rows and columns of pyramid level L: 2^L rows by 2^(L+1) columns. */
export function gridBounds(level: number): { rows: number; cols: number } {
  if (!Number.isInteger(level) || level < 0) throw new Error(`bad pyramid level ${level}`)
  return { rows: 2 ** level, cols: 2 ** (level + 1) }
}
