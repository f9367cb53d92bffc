// Thin typed client for the tilesift /v1 HTTP API. Every network interaction
// of the app goes through this module; there are no other endpoints.

import type { HealthInfo, RankMode, SearchResponse, TileMeta } from './types.js'

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(detail)
    this.name = 'ApiError'
  }
}

export interface SearchOptions {
  k?: number
  excludeIds?: number[]
  rankMode?: RankMode
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class ApiClient {
  private readonly base: string

  constructor(
    serviceUrl: string,
    private readonly fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {
    this.base = serviceUrl.replace(/\/+$/, '')
  }

  /** Search by a snipped image (PNG or JPEG bytes). */
  async searchByImage(image: Blob, opts: SearchOptions = {}): Promise<SearchResponse> {
    const form = new FormData()
    form.append('image', image, image.type === 'image/jpeg' ? 'snip.jpg' : 'snip.png')
    if (opts.k !== undefined) form.append('k', String(opts.k))
    if (opts.excludeIds?.length) form.append('exclude_ids', opts.excludeIds.join(','))
    return this.request('/v1/search', { method: 'POST', body: form })
  }

  /** Search by already-stored tiles (they are excluded from their own results). */
  async searchBySelection(selectedIds: number[], opts: SearchOptions = {}): Promise<SearchResponse> {
    return this.postJson('/v1/search', selectedIds, opts)
  }

  /** Refinement round: same contract as search but selection is mandatory. */
  async refine(selectedIds: number[], opts: SearchOptions = {}): Promise<SearchResponse> {
    return this.postJson('/v1/refine', selectedIds, opts)
  }

  async tileMeta(itemId: number): Promise<TileMeta> {
    return this.request(`/v1/tiles/${itemId}`, { method: 'GET' })
  }

  async health(): Promise<HealthInfo> {
    return this.request('/v1/health', { method: 'GET' })
  }

  private postJson(
    path: '/v1/search' | '/v1/refine',
    selectedIds: number[],
    opts: SearchOptions,
  ): Promise<SearchResponse> {
    const body: Record<string, unknown> = { selected_ids: selectedIds }
    if (opts.k !== undefined) body.k = opts.k
    if (opts.excludeIds?.length) body.exclude_ids = opts.excludeIds
    if (opts.rankMode !== undefined) body.rank_mode = opts.rankMode
    return this.request(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
  }

  private async request<T>(path: string, init: RequestInit): Promise<T> {
    let resp: Response
    try {
      resp = await this.fetchFn(this.base + path, init)
    } catch (err) {
      throw new ApiError(0, 'unreachable', `service unreachable at ${this.base}: ${String(err)}`)
    }
    if (!resp.ok) {
      let code = 'http-error'
      let detail = `HTTP ${resp.status}`
      try {
        const payload = (await resp.json()) as { error?: string; detail?: string }
        if (payload.error) code = payload.error
        if (payload.detail) detail = payload.detail
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(resp.status, code, detail)
    }
    return (await resp.json()) as T
  }
}
