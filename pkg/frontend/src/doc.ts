/** Line-document helpers shared by every API call (pipe-separated rows). */

export function buildDoc(token: string, lines: string[]): string {
  return [`TOKEN|${token}`, ...lines].join("\n");
}

export function docRows(doc: string): string[][] {
  return doc
    .split("\n")
    .filter((line) => line !== "")
    .map((line) => line.split("|"));
}

/** First row of a reply, split; throws when the reply is empty. */
export function firstRow(doc: string): string[] {
  const rows = docRows(doc);
  if (rows.length === 0) {
    throw new Error("empty reply document");
  }
  return rows[0];
}
