// Snip geometry and capture. The math is pure; the pixel work runs through a
// minimal canvas interface so tests can verify composition without a browser.

export const SNIP_SIZE = 256

export interface Rect {
  x: number
  y: number
  width: number
  height: number
}

export interface DragGesture {
  startX: number
  startY: number
  endX: number
  endY: number
}

/**
 * Turn a raw drag into a selection rectangle: order the corners, clamp to the
 * viewport, and reject degenerate (zero-area) drags with null — a plain click
 * must not trigger a search.
 */
export function normalizeDrag(drag: DragGesture, viewport: Rect): Rect | null {
  const x0 = Math.max(viewport.x, Math.min(drag.startX, drag.endX))
  const y0 = Math.max(viewport.y, Math.min(drag.startY, drag.endY))
  const x1 = Math.min(viewport.x + viewport.width, Math.max(drag.startX, drag.endX))
  const y1 = Math.min(viewport.y + viewport.height, Math.max(drag.startY, drag.endY))
  if (x1 - x0 <= 0 || y1 - y0 <= 0) return null
  return { x: x0, y: y0, width: x1 - x0, height: y1 - y0 }
}

export interface TileAlignedBounds {
  rowMin: number
  rowMax: number
  colMin: number
  colMax: number
}

/** Inclusive tile index bounds covered by a rectangle in map pixel space. */
export function tileAlignedBounds(rect: Rect, tileSize: number): TileAlignedBounds {
  if (tileSize <= 0) throw new Error(`bad tile size ${tileSize}`)
  return {
    rowMin: Math.floor(rect.y / tileSize),
    rowMax: Math.ceil((rect.y + rect.height) / tileSize) - 1,
    colMin: Math.floor(rect.x / tileSize),
    colMax: Math.ceil((rect.x + rect.width) / tileSize) - 1,
  }
}

// -- capture -----------------------------------------------------------------

export interface DrawContextLike {
  drawImage(
    image: unknown,
    sx: number,
    sy: number,
    sw: number,
    sh: number,
    dx: number,
    dy: number,
    dw: number,
    dh: number,
  ): void
}

export interface CanvasLike {
  width: number
  height: number
  getContext(kind: '2d'): DrawContextLike | null
}

/** One already-loaded tile bitmap, positioned at (col*size, row*size) in map space. */
export interface TileBitmap {
  row: number
  col: number
  size: number
  image: unknown
}

/**
 * Compose the snipped region onto a SNIP_SIZE x SNIP_SIZE canvas from the
 * tile bitmaps the map already rendered — the capture matches what the user
 * saw, without re-fetching anything. Returns the tiles actually drawn.
 */
export function composeSnip(rect: Rect, tiles: TileBitmap[], canvas: CanvasLike): TileBitmap[] {
  canvas.width = SNIP_SIZE
  canvas.height = SNIP_SIZE
  const ctx = canvas.getContext('2d')
  if (!ctx) throw new Error('2d canvas context unavailable')
  const scaleX = SNIP_SIZE / rect.width
  const scaleY = SNIP_SIZE / rect.height
  const drawn: TileBitmap[] = []
  for (const tile of tiles) {
    const tileX = tile.col * tile.size
    const tileY = tile.row * tile.size
    // Intersection of the selection with this tile, in map pixels.
    const ix0 = Math.max(rect.x, tileX)
    const iy0 = Math.max(rect.y, tileY)
    const ix1 = Math.min(rect.x + rect.width, tileX + tile.size)
    const iy1 = Math.min(rect.y + rect.height, tileY + tile.size)
    if (ix1 - ix0 <= 0 || iy1 - iy0 <= 0) continue
    ctx.drawImage(
      tile.image,
      ix0 - tileX,
      iy0 - tileY,
      ix1 - ix0,
      iy1 - iy0,
      (ix0 - rect.x) * scaleX,
      (iy0 - rect.y) * scaleY,
      (ix1 - ix0) * scaleX,
      (iy1 - iy0) * scaleY,
    )
    drawn.push(tile)
  }
  return drawn
}
