// Client-side refinement state. The service is stateless, so everything the
// user accumulates across rounds — confirmed tiles, rejected tiles, the last
// response — lives here.

import type { SearchResponse, SearchResult } from './types.js'

export class Session {
  /** Item ids the user confirmed, in the order they were first accepted. */
  private acceptedOrder: number[] = []
  private acceptedSet = new Set<number>()
  private rejectedSet = new Set<number>()
  /** Every tile seen in any response, by id, so exports can resolve metadata. */
  private known = new Map<number, SearchResult>()

  currentResults: SearchResponse | null = null
  /** Refinement round counter: +1 per applied search/refine response. */
  stage = 0

  get accepted(): number[] {
    return [...this.acceptedOrder]
  }

  get rejected(): number[] {
    return [...this.rejectedSet]
  }

  /** Ids to exclude from the next round: everything accepted or rejected. */
  get excludeIds(): number[] {
    return [...this.acceptedOrder, ...this.rejectedSet]
  }

  isAccepted(id: number): boolean {
    return this.acceptedSet.has(id)
  }

  isRejected(id: number): boolean {
    return this.rejectedSet.has(id)
  }

  /** Confirm a tile. Accepting clears any standing rejection (the sets stay disjoint). */
  accept(id: number): void {
    this.rejectedSet.delete(id)
    if (!this.acceptedSet.has(id)) {
      this.acceptedSet.add(id)
      this.acceptedOrder.push(id)
    }
  }

  unaccept(id: number): void {
    if (this.acceptedSet.delete(id)) {
      this.acceptedOrder = this.acceptedOrder.filter((x) => x !== id)
    }
  }

  /** Exclude a tile from future rounds. Rejecting withdraws any acceptance. */
  reject(id: number): void {
    this.unaccept(id)
    this.rejectedSet.add(id)
  }

  unreject(id: number): void {
    this.rejectedSet.delete(id)
  }

  toggleAccept(id: number): void {
    this.isAccepted(id) ? this.unaccept(id) : this.accept(id)
  }

  toggleReject(id: number): void {
    this.isRejected(id) ? this.unreject(id) : this.reject(id)
  }

  /** Install a search/refine response as the current round. */
  applyResponse(resp: SearchResponse): void {
    for (const r of resp.results) this.known.set(r.item_id, r)
    this.currentResults = resp
    this.stage += 1
  }

  /** Metadata for any tile seen in a response this session. */
  tile(id: number): SearchResult | undefined {
    return this.known.get(id)
  }

  /**
   * The accepted tiles with their metadata, in acceptance order — the rows a
   * dataset export writes. Throws if an accepted id was never seen in a
   * response, which would mean state got corrupted outside this class.
   */
  acceptedTiles(): SearchResult[] {
    return this.acceptedOrder.map((id) => {
      const tile = this.known.get(id)
      if (!tile) throw new Error(`accepted item ${id} has no recorded metadata`)
      return tile
    })
  }
}
