/** Trailing debounce and a latest-only async dispatcher.
 *
 * Dragging the magnitude slider costs one generator forward pass per
 * request, so values are debounced (150 ms default) and an in-flight
 * request is aborted client-side when a newer value supersedes it.
 */

export interface Debounced<T> {
  call: (value: T) => void;
  cancel: () => void;
  flush: () => void;
  pending: () => boolean;
}

export function debounce<T>(
  fn: (value: T) => void,
  delayMs = 150,
): Debounced<T> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastValue: T;

  const fire = () => {
    timer = null;
    fn(lastValue);
  };

  return {
    call(value: T) {
      lastValue = value;
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(fire, delayMs);
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
    flush() {
      if (timer !== null) {
        clearTimeout(timer);
        fire();
      }
    },
    pending: () => timer !== null,
  };
}

export interface SendOutcome<R> {
  value: R | null;
  superseded: boolean;
}

/** Runs at most one request at a time; newer submissions abort older ones. */
export class LatestOnlySender<T, R> {
  private controller: AbortController | null = null;
  private generation = 0;
  requestCount = 0;

  constructor(
    private send: (value: T, signal: AbortSignal) => Promise<R>,
  ) {}

  async dispatch(value: T): Promise<SendOutcome<R>> {
    this.generation += 1;
    const myGeneration = this.generation;
    if (this.controller) this.controller.abort();
    this.controller = new AbortController();
    this.requestCount += 1;
    try {
      const result = await this.send(value, this.controller.signal);
      return { value: result, superseded: myGeneration !== this.generation };
    } catch (err) {
      if (myGeneration !== this.generation) return { value: null, superseded: true };
      throw err;
    }
  }
}
