/** Incremental NDJSON decoder: feed arbitrary chunk boundaries, get complete
 * JSON values out. The trailing partial line is buffered until its newline
 * (or flush) arrives. */

export class NdjsonParser<T = unknown> {
  private buffer = "";

  feed(chunk: string): T[] {
    this.buffer += chunk;
    const out: T[] = [];
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (line) out.push(JSON.parse(line) as T);
    }
    return out;
  }

  /** Drain a final unterminated line (server closed without newline). */
  flush(): T[] {
    const line = this.buffer.trim();
    this.buffer = "";
    return line ? [JSON.parse(line) as T] : [];
  }
}
