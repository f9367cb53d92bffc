import { describe, expect, it } from 'vitest'
import {
  composeSnip,
  normalizeDrag,
  SNIP_SIZE,
  tileAlignedBounds,
  type CanvasLike,
  type DrawContextLike,
  type TileBitmap,
} from '../../src/snip.js'

const viewport = { x: 0, y: 0, width: 2048, height: 1024 }

describe('normalizeDrag', () => {
  it('orders corners dragged in any direction', () => {
    const down = normalizeDrag({ startX: 10, startY: 20, endX: 110, endY: 80 }, viewport)
    const up = normalizeDrag({ startX: 110, startY: 80, endX: 10, endY: 20 }, viewport)
    expect(down).toEqual({ x: 10, y: 20, width: 100, height: 60 })
    expect(up).toEqual(down)
  })

  it('clamps to the viewport', () => {
    const rect = normalizeDrag({ startX: -50, startY: 900, endX: 100, endY: 5000 }, viewport)
    expect(rect).toEqual({ x: 0, y: 900, width: 100, height: 124 })
  })

  it('returns null for clicks and zero-area drags', () => {
    expect(normalizeDrag({ startX: 40, startY: 40, endX: 40, endY: 40 }, viewport)).toBeNull()
    expect(normalizeDrag({ startX: 40, startY: 40, endX: 40, endY: 90 }, viewport)).toBeNull()
    expect(normalizeDrag({ startX: 40, startY: 40, endX: 90, endY: 40 }, viewport)).toBeNull()
  })

  it('returns null for drags entirely outside the viewport', () => {
    expect(normalizeDrag({ startX: -90, startY: 10, endX: -10, endY: 60 }, viewport)).toBeNull()
  })
})

describe('tileAlignedBounds', () => {
  it('maps a rectangle to the inclusive tile range it touches', () => {
    expect(tileAlignedBounds({ x: 0, y: 0, width: 128, height: 128 }, 128)).toEqual({
      rowMin: 0,
      rowMax: 0,
      colMin: 0,
      colMax: 0,
    })
    expect(tileAlignedBounds({ x: 100, y: 200, width: 200, height: 60 }, 128)).toEqual({
      rowMin: 1,
      rowMax: 2,
      colMin: 0,
      colMax: 2,
    })
  })

  it('rejects a non-positive tile size', () => {
    expect(() => tileAlignedBounds({ x: 0, y: 0, width: 1, height: 1 }, 0)).toThrow(/tile size/)
  })
})

interface DrawCall {
  image: unknown
  sx: number
  sy: number
  sw: number
  sh: number
  dx: number
  dy: number
  dw: number
  dh: number
}

function fakeCanvas(): { canvas: CanvasLike; calls: DrawCall[] } {
  const calls: DrawCall[] = []
  const ctx: DrawContextLike = {
    drawImage: (image, sx, sy, sw, sh, dx, dy, dw, dh) =>
      calls.push({ image, sx, sy, sw, sh, dx, dy, dw, dh }),
  }
  const canvas: CanvasLike = { width: 0, height: 0, getContext: () => ctx }
  return { canvas, calls }
}

function tile(row: number, col: number, size = 128): TileBitmap {
  return { row, col, size, image: `tile-${row}-${col}` }
}

describe('composeSnip', () => {
  it('sizes the canvas to the snip output size', () => {
    const { canvas } = fakeCanvas()
    composeSnip({ x: 0, y: 0, width: 128, height: 128 }, [tile(0, 0)], canvas)
    expect(canvas.width).toBe(SNIP_SIZE)
    expect(canvas.height).toBe(SNIP_SIZE)
  })

  it('a drag covering exactly one tile draws that whole tile over the whole canvas', () => {
    const { canvas, calls } = fakeCanvas()
    const drawn = composeSnip(
      { x: 128, y: 0, width: 128, height: 128 },
      [tile(0, 0), tile(0, 1), tile(1, 1)],
      canvas,
    )
    expect(drawn.map((t) => `${t.row}/${t.col}`)).toEqual(['0/1'])
    expect(calls).toHaveLength(1)
    expect(calls[0]).toEqual({
      image: 'tile-0-1',
      sx: 0,
      sy: 0,
      sw: 128,
      sh: 128,
      dx: 0,
      dy: 0,
      dw: SNIP_SIZE,
      dh: SNIP_SIZE,
    })
  })

  it('draws only intersecting tiles, each at the right source and destination', () => {
    const { canvas, calls } = fakeCanvas()
    // 128x128 selection centered on the corner where four tiles meet.
    const rect = { x: 64, y: 64, width: 128, height: 128 }
    const tiles = [tile(0, 0), tile(0, 1), tile(1, 0), tile(1, 1), tile(5, 5)]
    const drawn = composeSnip(rect, tiles, canvas)
    expect(drawn).toHaveLength(4)
    expect(calls).toHaveLength(4)
    const byImage = new Map(calls.map((c) => [c.image, c]))
    // top-left quadrant comes from tile (0,0)'s bottom-right quarter
    expect(byImage.get('tile-0-0')).toMatchObject({ sx: 64, sy: 64, sw: 64, sh: 64, dx: 0, dy: 0, dw: 128, dh: 128 })
    // bottom-right quadrant comes from tile (1,1)'s top-left quarter
    expect(byImage.get('tile-1-1')).toMatchObject({ sx: 0, sy: 0, sw: 64, sh: 64, dx: 128, dy: 128, dw: 128, dh: 128 })
  })

  it('scales a non-square selection onto the square canvas', () => {
    const { calls, canvas } = fakeCanvas()
    composeSnip({ x: 0, y: 0, width: 64, height: 128 }, [tile(0, 0)], canvas)
    expect(calls[0]).toMatchObject({ sw: 64, sh: 128, dw: SNIP_SIZE, dh: SNIP_SIZE })
  })

  it('fails loudly without a drawing context', () => {
    const canvas: CanvasLike = { width: 0, height: 0, getContext: () => null }
    expect(() => composeSnip({ x: 0, y: 0, width: 1, height: 1 }, [], canvas)).toThrow(/context/)
  })
})
