// Result grid rendering. The grid is a faithful view of the last response:
// cards appear in response order (never re-sorted client-side), each with the
// tile image, a distance badge, and accept/reject toggles bound to the session.

import type { Session } from './session.js'
import type { SearchResponse, SearchResult } from './types.js'

export interface RenderOptions {
  /** Called after any accept/reject toggle, for dependent UI (export buttons…). */
  onSelectionChange?: () => void
  /** Document to create nodes with (defaults to the global one). */
  document?: Document
}

function syncCardState(card: HTMLElement, session: Session, id: number): void {
  card.classList.toggle('accepted', session.isAccepted(id))
  card.classList.toggle('rejected', session.isRejected(id))
  const acceptBtn = card.querySelector<HTMLButtonElement>('button.accept')
  const rejectBtn = card.querySelector<HTMLButtonElement>('button.reject')
  if (acceptBtn) acceptBtn.textContent = session.isAccepted(id) ? '✓ selected' : 'select'
  if (rejectBtn) rejectBtn.textContent = session.isRejected(id) ? '✕ rejected' : 'reject'
}

function buildCard(
  doc: Document,
  result: SearchResult,
  session: Session,
  opts: RenderOptions,
): HTMLElement {
  const card = doc.createElement('figure')
  card.className = 'result-card'
  card.dataset.itemId = String(result.item_id)

  const img = doc.createElement('img')
  img.src = result.url
  img.alt = `${result.layer} ${result.date} tile ${result.row}/${result.col}`
  img.addEventListener('error', () => {
    // A dead tile URL must still leave a visible, selectable card.
    const placeholder = doc.createElement('div')
    placeholder.className = 'tile-placeholder'
    placeholder.textContent = 'image unavailable'
    img.replaceWith(placeholder)
  })
  card.append(img)

  const badge = doc.createElement('figcaption')
  badge.className = 'distance-badge'
  badge.textContent = `#${result.item_id} · d=${result.distance.toFixed(3)}`
  card.append(badge)

  const accept = doc.createElement('button')
  accept.type = 'button'
  accept.className = 'accept'
  accept.addEventListener('click', () => {
    session.toggleAccept(result.item_id)
    syncCardState(card, session, result.item_id)
    opts.onSelectionChange?.()
  })
  const reject = doc.createElement('button')
  reject.type = 'button'
  reject.className = 'reject'
  reject.addEventListener('click', () => {
    session.toggleReject(result.item_id)
    syncCardState(card, session, result.item_id)
    opts.onSelectionChange?.()
  })
  card.append(accept, reject)
  syncCardState(card, session, result.item_id)
  return card
}

/** Replace `container`'s contents with cards for `resp`, in response order. */
export function renderResults(
  container: HTMLElement,
  resp: SearchResponse | null,
  session: Session,
  opts: RenderOptions = {},
): void {
  const doc = opts.document ?? container.ownerDocument
  container.replaceChildren()
  if (!resp || resp.results.length === 0) {
    const empty = doc.createElement('p')
    empty.className = 'no-matches'
    empty.textContent = resp ? 'no matches' : 'snip a region to search'
    container.append(empty)
    return
  }
  for (const result of resp.results) {
    container.append(buildCard(doc, result, session, opts))
  }
}
