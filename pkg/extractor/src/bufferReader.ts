/** Little-endian cursor reader over a byte buffer. */
export class BufferReader {
  private view: DataView;
  cursor = 0;

  constructor(readonly bytes: Uint8Array) {
    this.view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  }

  get length(): number {
    return this.bytes.byteLength;
  }

  seek(offset: number): this {
    if (offset < 0 || offset > this.length) {
      throw new RangeError(`seek to ${offset} outside buffer of ${this.length}`);
    }
    this.cursor = offset;
    return this;
  }

  private need(n: number) {
    if (this.cursor + n > this.length) {
      throw new RangeError(`read of ${n} bytes at ${this.cursor} overruns buffer of ${this.length}`);
    }
  }

  u8(): number {
    this.need(1);
    return this.view.getUint8(this.cursor++);
  }

  u16(): number {
    this.need(2);
    const v = this.view.getUint16(this.cursor, true);
    this.cursor += 2;
    return v;
  }

  u32(): number {
    this.need(4);
    const v = this.view.getUint32(this.cursor, true);
    this.cursor += 4;
    return v;
  }

  i32(): number {
    this.need(4);
    const v = this.view.getInt32(this.cursor, true);
    this.cursor += 4;
    return v;
  }

  /** Unsigned LEB128, at most five bytes in DEX. */
  uleb128(): number {
    let result = 0;
    let shift = 0;
    for (let i = 0; i < 5; i++) {
      const byte = this.u8();
      result |= (byte & 0x7f) << shift;
      if ((byte & 0x80) === 0) return result >>> 0;
      shift += 7;
    }
    throw new RangeError("uleb128 longer than 5 bytes");
  }

  take(n: number): Uint8Array {
    this.need(n);
    const out = this.bytes.subarray(this.cursor, this.cursor + n);
    this.cursor += n;
    return out;
  }

  at(offset: number): BufferReader {
    const child = new BufferReader(this.bytes);
    child.seek(offset);
    return child;
  }
}
