import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce, LatestOnlySender } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires once after a burst of calls", () => {
    const seen: number[] = [];
    const d = debounce<number>((v) => seen.push(v), 150);
    for (let i = 0; i < 10; i++) {
      d.call(i);
      vi.advanceTimersByTime(20);
    }
    expect(seen).toEqual([]); // still dragging
    vi.advanceTimersByTime(150);
    expect(seen).toEqual([9]); // trailing edge delivers the last value
  });

  it("issues at most one request per 150ms of continuous drag", () => {
    const seen: number[] = [];
    const d = debounce<number>((v) => seen.push(v), 150);
    // drag for 900ms with a slider event every 30ms, pausing twice
    let value = 0;
    for (let segment = 0; segment < 3; segment++) {
      for (let i = 0; i < 10; i++) {
        d.call(value++);
        vi.advanceTimersByTime(30);
      }
      vi.advanceTimersByTime(200); // finger pauses; trailing fire
    }
    // 3 pauses -> 3 requests for ~900ms of dragging: well under 1 per 150ms
    expect(seen.length).toBe(3);
    expect(seen.length).toBeLessThanOrEqual(Math.ceil(900 / 150));
  });

  it("cancel drops the pending call", () => {
    const seen: number[] = [];
    const d = debounce<number>((v) => seen.push(v), 150);
    d.call(1);
    expect(d.pending()).toBe(true);
    d.cancel();
    vi.advanceTimersByTime(300);
    expect(seen).toEqual([]);
    expect(d.pending()).toBe(false);
  });

  it("flush fires immediately", () => {
    const seen: number[] = [];
    const d = debounce<number>((v) => seen.push(v), 150);
    d.call(7);
    d.flush();
    expect(seen).toEqual([7]);
  });
});

describe("LatestOnlySender", () => {
  it("marks earlier in-flight requests as superseded", async () => {
    const resolvers: ((v: string) => void)[] = [];
    const sender = new LatestOnlySender<number, string>(
      (value) =>
        new Promise<string>((resolve) => {
          resolvers.push(() => resolve(`r${value}`));
        }),
    );
    const first = sender.dispatch(1);
    const second = sender.dispatch(2);
    resolvers[0]("");
    resolvers[1]("");
    const [a, b] = await Promise.all([first, second]);
    expect(a.superseded).toBe(true);
    expect(b.superseded).toBe(false);
    expect(b.value).toBe("r2");
    expect(sender.requestCount).toBe(2);
  });

  it("aborts the previous controller on a new dispatch", async () => {
    const signals: AbortSignal[] = [];
    const sender = new LatestOnlySender<number, number>(async (value, signal) => {
      signals.push(signal);
      return value;
    });
    await sender.dispatch(1);
    await sender.dispatch(2);
    expect(signals[0].aborted).toBe(true);
    expect(signals[1].aborted).toBe(false);
  });

  it("swallows errors from superseded requests", async () => {
    let fail: (() => void) | null = null;
    const sender = new LatestOnlySender<number, number>((value, signal) => {
      if (value === 1) {
        return new Promise((_, reject) => {
          fail = () => reject(new Error("aborted"));
          signal.addEventListener("abort", () => fail && fail());
        });
      }
      return Promise.resolve(value);
    });
    const first = sender.dispatch(1);
    const second = sender.dispatch(2);
    const [a, b] = await Promise.all([first, second]);
    expect(a.superseded).toBe(true);
    expect(a.value).toBeNull();
    expect(b.value).toBe(2);
  });
});
