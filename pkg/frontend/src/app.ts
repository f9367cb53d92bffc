// Application wiring: map pane with drag-to-snip, results grid, refinement
// and export controls. All state lives in Session; all network traffic goes
// through ApiClient; this module only connects gestures to those two.

import { ApiClient, ApiError } from './api.js'
import type { AppConfig } from './types.js'
import { gridBounds, resolveTileUrl } from './config.js'
import { toCsv, toExportRow, toJson } from './export.js'
import { RequestGate } from './gate.js'
import { renderResults } from './results.js'
import { Session } from './session.js'
import { composeSnip, normalizeDrag, type CanvasLike, type TileBitmap } from './snip.js'

/** Display size of one map tile in CSS pixels. */
export const MAP_TILE_PX = 128

export interface AppHooks {
  /** Canvas factory for snip capture (overridable where real canvases don't exist). */
  createCanvas?: (doc: Document) => CanvasLike
  /** Encode a drawn canvas to an image blob. */
  canvasToBlob?: (canvas: CanvasLike) => Promise<Blob>
  /** Deliver an export file to the user. */
  download?: (filename: string, mimeType: string, content: string, doc: Document) => void
}

function defaultCreateCanvas(doc: Document): CanvasLike {
  return doc.createElement('canvas')
}

function defaultCanvasToBlob(canvas: CanvasLike): Promise<Blob> {
  const real = canvas as HTMLCanvasElement
  return new Promise((resolve, reject) => {
    real.toBlob(
      (blob) => (blob ? resolve(blob) : reject(new Error('canvas encoding failed'))),
      'image/png',
    )
  })
}

function defaultDownload(filename: string, mimeType: string, content: string, doc: Document): void {
  const blob = new Blob([content], { type: mimeType })
  const url = URL.createObjectURL(blob)
  const a = doc.createElement('a')
  a.href = url
  a.download = filename
  doc.body.append(a)
  a.click()
  a.remove()
  URL.revokeObjectURL(url)
}

export class App {
  readonly session = new Session()
  readonly gate = new RequestGate()
  private readonly api: ApiClient
  private readonly hooks: Required<AppHooks>
  private readonly doc: Document

  private mapPane!: HTMLElement
  private snipBox!: HTMLElement
  private resultsPane!: HTMLElement
  private statusLine!: HTMLElement
  private refineBtn!: HTMLButtonElement
  private exportCsvBtn!: HTMLButtonElement
  private exportJsonBtn!: HTMLButtonElement
  private retryBtn!: HTMLButtonElement
  private lastFailed: (() => Promise<void>) | null = null
  private drag: { startX: number; startY: number } | null = null

  constructor(
    private readonly root: HTMLElement,
    private readonly config: AppConfig,
    api?: ApiClient,
    hooks: AppHooks = {},
  ) {
    this.doc = root.ownerDocument
    this.api = api ?? new ApiClient(config.serviceUrl)
    this.hooks = {
      createCanvas: hooks.createCanvas ?? defaultCreateCanvas,
      canvasToBlob: hooks.canvasToBlob ?? defaultCanvasToBlob,
      download: hooks.download ?? defaultDownload,
    }
  }

  mount(): void {
    this.root.replaceChildren()
    this.root.classList.add('snip-ui')
    this.buildToolbar()
    this.buildMap()
    this.resultsPane = this.el('section', 'results-pane')
    this.root.append(this.resultsPane)
    this.refreshResults()
    this.refreshControls()
    void this.loadHealth()
  }

  // -- construction ----------------------------------------------------------

  private el<K extends keyof HTMLElementTagNameMap>(tag: K, cls: string): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag)
    node.className = cls
    return node
  }

  private buildToolbar(): void {
    const bar = this.el('header', 'toolbar')
    this.statusLine = this.el('span', 'status')
    this.statusLine.textContent = 'drag on the map to snip a query region'

    this.refineBtn = this.el('button', 'refine')
    this.refineBtn.type = 'button'
    this.refineBtn.textContent = 'refine'
    this.refineBtn.addEventListener('click', () => void this.refine())

    this.exportCsvBtn = this.el('button', 'export-csv')
    this.exportCsvBtn.type = 'button'
    this.exportCsvBtn.textContent = 'export CSV'
    this.exportCsvBtn.addEventListener('click', () => this.export('csv'))

    this.exportJsonBtn = this.el('button', 'export-json')
    this.exportJsonBtn.type = 'button'
    this.exportJsonBtn.textContent = 'export JSON'
    this.exportJsonBtn.addEventListener('click', () => this.export('json'))

    this.retryBtn = this.el('button', 'retry')
    this.retryBtn.type = 'button'
    this.retryBtn.textContent = 'retry'
    this.retryBtn.hidden = true
    this.retryBtn.addEventListener('click', () => {
      const task = this.lastFailed
      if (task) void this.gate.run(task)
    })

    bar.append(this.statusLine, this.refineBtn, this.exportCsvBtn, this.exportJsonBtn, this.retryBtn)
    this.root.append(bar)
  }

  private buildMap(): void {
    const { rows, cols } = gridBounds(this.config.level)
    this.mapPane = this.el('section', 'map-pane')
    this.mapPane.style.position = 'relative'
    this.mapPane.style.width = `${cols * MAP_TILE_PX}px`
    this.mapPane.style.height = `${rows * MAP_TILE_PX}px`
    for (let row = 0; row < rows; row++) {
      for (let col = 0; col < cols; col++) {
        const img = this.el('img', 'map-tile')
        img.src = resolveTileUrl(this.config.urlTemplate, {
          layer: this.config.layer,
          date: this.config.date,
          matrix: this.config.level,
          row,
          col,
        })
        img.draggable = false
        img.dataset.row = String(row)
        img.dataset.col = String(col)
        img.style.position = 'absolute'
        img.style.left = `${col * MAP_TILE_PX}px`
        img.style.top = `${row * MAP_TILE_PX}px`
        img.style.width = `${MAP_TILE_PX}px`
        img.style.height = `${MAP_TILE_PX}px`
        this.mapPane.append(img)
      }
    }
    this.snipBox = this.el('div', 'snip-box')
    this.snipBox.style.position = 'absolute'
    this.snipBox.hidden = true
    this.mapPane.append(this.snipBox)

    this.mapPane.addEventListener('mousedown', (e) => this.onDragStart(e as MouseEvent))
    this.mapPane.addEventListener('mousemove', (e) => this.onDragMove(e as MouseEvent))
    this.mapPane.addEventListener('mouseup', (e) => void this.onDragEnd(e as MouseEvent))
    this.root.append(this.mapPane)
  }

  // -- snip gesture ----------------------------------------------------------

  private paneCoords(e: MouseEvent): { x: number; y: number } {
    const box = this.mapPane.getBoundingClientRect()
    return { x: e.clientX - box.left, y: e.clientY - box.top }
  }

  private onDragStart(e: MouseEvent): void {
    const { x, y } = this.paneCoords(e)
    this.drag = { startX: x, startY: y }
    this.snipBox.hidden = true
  }

  private onDragMove(e: MouseEvent): void {
    if (!this.drag) return
    const { x, y } = this.paneCoords(e)
    const rect = normalizeDrag(
      { startX: this.drag.startX, startY: this.drag.startY, endX: x, endY: y },
      this.viewport(),
    )
    if (rect) {
      this.snipBox.hidden = false
      this.snipBox.style.left = `${rect.x}px`
      this.snipBox.style.top = `${rect.y}px`
      this.snipBox.style.width = `${rect.width}px`
      this.snipBox.style.height = `${rect.height}px`
    }
  }

  private viewport() {
    const { rows, cols } = gridBounds(this.config.level)
    return { x: 0, y: 0, width: cols * MAP_TILE_PX, height: rows * MAP_TILE_PX }
  }

  private async onDragEnd(e: MouseEvent): Promise<void> {
    if (!this.drag) return
    const start = this.drag
    this.drag = null
    const { x, y } = this.paneCoords(e)
    const rect = normalizeDrag(
      { startX: start.startX, startY: start.startY, endX: x, endY: y },
      this.viewport(),
    )
    this.snipBox.hidden = true
    if (!rect) {
      // Zero-area click: no request, just a visible hint.
      this.setStatus('drag a rectangle to snip — a click selects nothing')
      return
    }
    await this.snipAndSearch(rect)
  }

  /** Capture the selection from the rendered tiles and search with it. */
  async snipAndSearch(rect: { x: number; y: number; width: number; height: number }): Promise<void> {
    const tiles: TileBitmap[] = []
    for (const img of Array.from(this.mapPane.querySelectorAll<HTMLImageElement>('img.map-tile'))) {
      tiles.push({
        row: Number(img.dataset.row),
        col: Number(img.dataset.col),
        size: MAP_TILE_PX,
        image: img,
      })
    }
    const canvas = this.hooks.createCanvas(this.doc)
    composeSnip(rect, tiles, canvas)
    const blob = await this.hooks.canvasToBlob(canvas)
    await this.runRound('searching…', () =>
      this.api.searchByImage(blob, { k: this.config.k, excludeIds: this.session.excludeIds }),
    )
  }

  async refine(): Promise<void> {
    if (this.session.accepted.length === 0) return
    await this.runRound('refining…', () =>
      this.api.refine(this.session.accepted, {
        k: this.config.k,
        excludeIds: this.session.excludeIds,
      }),
    )
  }

  /** Run one search/refine round through the single-flight gate. */
  private runRound(
    label: string,
    call: () => Promise<import('./types.js').SearchResponse>,
  ): Promise<void> {
    const task = async () => {
      this.setStatus(label)
      try {
        const resp = await call()
        this.lastFailed = null
        this.retryBtn.hidden = true
        this.session.applyResponse(resp)
        this.refreshResults()
        this.setStatus(
          `round ${this.session.stage}: ${resp.results.length} results in ${resp.elapsed_ms} ms`,
        )
      } catch (err) {
        // Session state stays untouched; surface the error and a retry control.
        this.lastFailed = task
        this.retryBtn.hidden = false
        this.setStatus(err instanceof ApiError ? `service error: ${err.message}` : String(err))
      }
      this.refreshControls()
    }
    return this.gate.run(task)
  }

  export(format: 'csv' | 'json'): void {
    const rows = this.session.acceptedTiles().map(toExportRow)
    if (rows.length === 0) return
    if (format === 'csv') {
      this.hooks.download('dataset.csv', 'text/csv', toCsv(rows), this.doc)
    } else {
      this.hooks.download('dataset.json', 'application/json', toJson(rows), this.doc)
    }
  }

  // -- view refresh ----------------------------------------------------------

  private async loadHealth(): Promise<void> {
    try {
      const h = await this.api.health()
      this.setStatus(
        `index: ${h.index_items} tiles · ${h.dimension}-d ${h.metric} · provider ${h.provider}` +
          (h.consistent ? '' : ' · WARNING: index/store out of sync'),
      )
    } catch {
      this.setStatus(`service not reachable at ${this.config.serviceUrl}`)
    }
  }

  private setStatus(text: string): void {
    this.statusLine.textContent = text
  }

  refreshResults(): void {
    renderResults(this.resultsPane, this.session.currentResults, this.session, {
      onSelectionChange: () => this.refreshControls(),
    })
  }

  refreshControls(): void {
    const any = this.session.accepted.length > 0
    this.refineBtn.disabled = !any
    this.exportCsvBtn.disabled = !any
    this.exportJsonBtn.disabled = !any
  }
}

export function mountApp(
  root: HTMLElement,
  config: AppConfig,
  api?: ApiClient,
  hooks?: AppHooks,
): App {
  const app = new App(root, config, api, hooks)
  app.mount()
  return app
}
