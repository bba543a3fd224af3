/** Deterministic force-directed layout.
 *
 * Neither modality carries display coordinates, so positions are
 * synthesized: initial placement is seeded by a hash of the node id,
 * then a fixed number of spring iterations untangles the picture.
 * Same ids + edges always produce the same layout.
 */

export interface Point {
  x: number;
  y: number;
}

export function hashId(s: string): number {
  // FNV-1a, 32 bit
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function unit(h: number): number {
  return (h % 100000) / 100000;
}

export function forceLayout(
  ids: string[],
  edges: [string, string][],
  width: number,
  height: number,
  iterations = 200,
): Map<string, Point> {
  const n = ids.length;
  const pos = new Map<string, Point>();
  if (n === 0) return pos;

  const margin = 30;
  const w = width - 2 * margin;
  const h = height - 2 * margin;
  ids.forEach((id) => {
    const hash = hashId(id);
    pos.set(id, {
      x: margin + unit(hash) * w,
      y: margin + unit(hashId(id + "#y")) * h,
    });
  });
  if (n === 1) {
    pos.set(ids[0]!, { x: width / 2, y: height / 2 });
    return pos;
  }

  const index = new Map(ids.map((id, i) => [id, i]));
  const pairs = edges
    .map(([a, b]) => [index.get(a), index.get(b)])
    .filter((p): p is [number, number] => p[0] !== undefined && p[1] !== undefined);
  const xs = ids.map((id) => pos.get(id)!.x);
  const ys = ids.map((id) => pos.get(id)!.y);
  const k = Math.sqrt((w * h) / n); // ideal spacing

  for (let it = 0; it < iterations; it++) {
    const t = 0.1 * Math.max(w, h) * (1 - it / iterations) + 1;
    const dx = new Array<number>(n).fill(0);
    const dy = new Array<number>(n).fill(0);
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        let ex = xs[i]! - xs[j]!;
        let ey = ys[i]! - ys[j]!;
        let d2 = ex * ex + ey * ey;
        if (d2 < 1e-6) {
          // deterministic nudge for coincident points
          ex = 0.01 * (i - j);
          ey = 0.013;
          d2 = ex * ex + ey * ey;
        }
        const rep = (k * k) / d2;
        dx[i]! += ex * rep;
        dy[i]! += ey * rep;
        dx[j]! -= ex * rep;
        dy[j]! -= ey * rep;
      }
    }
    for (const [i, j] of pairs) {
      const ex = xs[i]! - xs[j]!;
      const ey = ys[i]! - ys[j]!;
      const d = Math.sqrt(ex * ex + ey * ey) || 1e-3;
      const att = (d * d) / k / d;
      dx[i]! -= ex * att;
      dy[i]! -= ey * att;
      dx[j]! += ex * att;
      dy[j]! += ey * att;
    }
    for (let i = 0; i < n; i++) {
      const d = Math.sqrt(dx[i]! * dx[i]! + dy[i]! * dy[i]!) || 1e-9;
      const step = Math.min(d, t);
      xs[i] = xs[i]! + (dx[i]! / d) * step;
      ys[i] = ys[i]! + (dy[i]! / d) * step;
      xs[i] = Math.max(margin, Math.min(width - margin, xs[i]!));
      ys[i] = Math.max(margin, Math.min(height - margin, ys[i]!));
    }
  }
  ids.forEach((id, i) => pos.set(id, { x: xs[i]!, y: ys[i]! }));
  return pos;
}
