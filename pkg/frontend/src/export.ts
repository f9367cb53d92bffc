// Dataset export: the accepted tiles as CSV or JSON. Both formats carry the
// same row shape; nothing is reordered or recomputed at export time.

import type { SearchResult } from './types.js'

export interface ExportRow {
  item_id: number
  url: string
  layer: string
  date: string
  tile_matrix: number
  row: number
  col: number
}

export const CSV_HEADER = 'item_id,url,layer,date,matrix,row,col'

export function toExportRow(tile: SearchResult): ExportRow {
  return {
    item_id: tile.item_id,
    url: tile.url,
    layer: tile.layer,
    date: tile.date,
    tile_matrix: tile.tile_matrix,
    row: tile.row,
    col: tile.col,
  }
}

function csvField(value: string | number): string {
  const s = String(value)
  return /[",\n]/.test(s) ? `"${s.replaceAll('"', '""')}"` : s
}

/** CSV with the pinned header; one data row per accepted tile, in order. */
export function toCsv(rows: ExportRow[]): string {
  const lines = [CSV_HEADER]
  for (const r of rows) {
    lines.push(
      [r.item_id, r.url, r.layer, r.date, r.tile_matrix, r.row, r.col].map(csvField).join(','),
    )
  }
  return lines.join('\n') + '\n'
}

/** JSON array of tile-record-with-url objects; parses back to the same rows. */
export function toJson(rows: ExportRow[]): string {
  return JSON.stringify(rows, null, 2) + '\n'
}
