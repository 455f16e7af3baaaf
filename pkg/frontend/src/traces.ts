/** Fixed-capacity ring buffer for the alpha and confidence strip charts. */

export class RingBuffer {
  private buf: number[] = [];
  private start = 0;

  constructor(readonly capacity = 600) {
    if (capacity < 1) throw new RangeError(`capacity must be >= 1, got ${capacity}`);
  }

  push(x: number): void {
    if (this.buf.length < this.capacity) {
      this.buf.push(x);
    } else {
      this.buf[this.start] = x;
      this.start = (this.start + 1) % this.capacity;
    }
  }

  get length(): number {
    return this.buf.length;
  }

  /** Oldest-to-newest snapshot. */
  values(): number[] {
    return this.buf.slice(this.start).concat(this.buf.slice(0, this.start));
  }

  clear(): void {
    this.buf = [];
    this.start = 0;
  }
}
