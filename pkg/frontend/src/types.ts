// Wire types for the tilesift /v1 API, plus the client's own config shape.

export interface SearchResult {
  item_id: number
  distance: number
  url: string
  layer: string
  date: string
  tile_matrix: number
  row: number
  col: number
}

export interface SearchResponse {
  results: SearchResult[]
  query_id: string
  elapsed_ms: number
}

export interface TileMeta {
  item_id: number
  layer: string
  date: string
  tile_matrix: number
  row: number
  col: number
  url: string
}

export interface HealthInfo {
  status: string
  index_items: number
  dimension: number
  metric: string
  store_items: number
  provider: string
  consistent: boolean
}

export type RankMode = 'centroid' | 'min'

export interface AppConfig {
  /** Base URL of the tilesift query service, e.g. http://127.0.0.1:8756 */
  serviceUrl: string
  /** Tile URL template with {layer} {date} {matrix} {row} {col} placeholders. */
  urlTemplate: string
  /** Layer and date shown in the map view. */
  layer: string
  date: string
  /** Pyramid level of the map view: a 2^level x 2^(level+1) grid. */
  level: number
  /** Default number of results per search/refine round. */
  k: number
}
