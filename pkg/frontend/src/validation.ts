/**
 * Client-side mirror of the identity-code rules: 2..6 characters, printable
 * ASCII 0x21..0x7E minus the reserved delimiters ':', '|' and '"'.
 * Validation here only gates form submission; the node revalidates anyway.
 */

export const MIN_CODE_LEN = 2;
export const MAX_CODE_LEN = 6;

const RESERVED = new Set([":", "|", '"']);

/** Returns a human-readable problem, or null when the code is acceptable. */
export function codeError(raw: string): string | null {
  const chars = Array.from(raw);
  if (chars.length < MIN_CODE_LEN) {
    return `too short: codes need at least ${MIN_CODE_LEN} characters`;
  }
  if (chars.length > MAX_CODE_LEN) {
    return `too long: codes allow at most ${MAX_CODE_LEN} characters`;
  }
  for (let i = 0; i < chars.length; i++) {
    const ch = chars[i];
    const cp = ch.codePointAt(0)!;
    if (cp < 0x21 || cp > 0x7e || RESERVED.has(ch)) {
      return `character ${JSON.stringify(ch)} at offset ${i} is not allowed`;
    }
  }
  return null;
}

export function isValidCode(raw: string): boolean {
  return codeError(raw) === null;
}

/** '+' followed by 7..15 digits; mirrors the node's phone rule. */
export function phoneError(raw: string): string | null {
  if (!/^\+[0-9]{7,15}$/.test(raw)) {
    return "phone numbers are '+' followed by 7..15 digits";
  }
  return null;
}
