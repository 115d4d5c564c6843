// sha-256 of PNG bytes, used to verify that a replayed run reproduced the
// recorded outputs bit-exactly (and that strength 0 returns the input).

export function b64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export async function sha256Hex(data: Uint8Array): Promise<string> {
  const subtle = globalThis.crypto?.subtle;
  if (subtle) {
    const ab = new Uint8Array(data).buffer; // detached copy keeps subtle happy
    const digest = await subtle.digest("SHA-256", ab);
    return [...new Uint8Array(digest)]
      .map((b) => b.toString(16).padStart(2, "0"))
      .join("");
  }
  // test environments without WebCrypto
  const { createHash } = await import("node:crypto");
  return createHash("sha256").update(data).digest("hex");
}

export function sha256HexOfB64(b64: string): Promise<string> {
  return sha256Hex(b64ToBytes(b64));
}
