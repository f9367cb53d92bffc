// Single-flight gate: the client keeps at most one search/refine request in
// the air. A gesture made while one is running replaces any queued gesture
// (only the newest waiting intent survives) and runs when the line is free.

export class RequestGate {
  private running = false
  private pending: (() => Promise<void>) | null = null

  get inFlight(): boolean {
    return this.running
  }

  /**
   * Run `task` now if the gate is idle; otherwise queue it, displacing any
   * previously queued task. Errors propagate to the submitting caller; a
   * queued task that gets displaced resolves without running.
   */
  async run(task: () => Promise<void>): Promise<void> {
    if (this.running) {
      this.pending = task
      return
    }
    this.running = true
    try {
      await task()
    } finally {
      this.running = false
      const next = this.pending
      this.pending = null
      if (next) void this.run(next)
    }
  }
}
