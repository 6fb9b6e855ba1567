/**
 * Small SVG scene builder: linear/log axes, polylines, markers, shaded
 * bands, and a provenance <metadata> block. No DOM, no dependencies;
 * the output is a standalone SVG document string.
 */

export type Scale = "linear" | "log";

export interface AxisSpec {
  label: string;
  scale: Scale;
  min: number;
  max: number;
}

export interface Provenance {
  tool: string;
  version: string;
  kind: string;
  inputs: { path: string; sha256: string }[];
  schemaVersion: number;
}

export interface SeriesStyle {
  color: string;
  dashed?: boolean;
  width?: number;
}

export const WIDTH = 640;
export const HEIGHT = 440;
const MARGIN = { left: 70, right: 16, top: 22, bottom: 52 };

export const PALETTE = ["#1b7837", "#e08214", "#542788", "#c51b7d", "#2166ac"];

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export class Figure {
  private body: string[] = [];
  private legendEntries: { label: string; style: SeriesStyle }[] = [];

  constructor(
    readonly x: AxisSpec,
    readonly y: AxisSpec,
    readonly title = "",
  ) {
    if (x.scale === "log" && (x.min <= 0 || x.max <= 0)) {
      throw new Error("log x-axis needs positive bounds");
    }
    if (y.scale === "log" && (y.min <= 0 || y.max <= 0)) {
      throw new Error("log y-axis needs positive bounds");
    }
  }

  private sx(v: number): number {
    const { min, max, scale } = this.x;
    const t = scale === "log"
      ? (Math.log10(v) - Math.log10(min)) / (Math.log10(max) - Math.log10(min))
      : (v - min) / (max - min);
    return MARGIN.left + t * (WIDTH - MARGIN.left - MARGIN.right);
  }

  private sy(v: number): number {
    const { min, max, scale } = this.y;
    const t = scale === "log"
      ? (Math.log10(v) - Math.log10(min)) / (Math.log10(max) - Math.log10(min))
      : (v - min) / (max - min);
    return HEIGHT - MARGIN.bottom - t * (HEIGHT - MARGIN.top - MARGIN.bottom);
  }

  polyline(xs: number[], ys: number[], style: SeriesStyle, label = ""): void {
    const pts: string[] = [];
    for (let i = 0; i < xs.length; i++) {
      if (!isFinite(xs[i]) || !isFinite(ys[i])) continue;
      if (this.x.scale === "log" && xs[i] <= 0) continue;
      if (this.y.scale === "log" && ys[i] <= 0) continue;
      pts.push(`${this.sx(xs[i]).toFixed(2)},${this.sy(ys[i]).toFixed(2)}`);
    }
    if (pts.length === 0) return;
    const dash = style.dashed ? ` stroke-dasharray="7 4"` : "";
    this.body.push(
      `<polyline fill="none" stroke="${style.color}" ` +
      `stroke-width="${style.width ?? 1.8}"${dash} points="${pts.join(" ")}"/>`,
    );
    if (label) this.legendEntries.push({ label, style });
  }

  marker(x: number, y: number, color: string, r = 4.5): void {
    this.body.push(
      `<circle cx="${this.sx(x).toFixed(2)}" cy="${this.sy(y).toFixed(2)}" ` +
      `r="${r}" fill="${color}"/>`,
    );
  }

  /** Horizontal band from the axis floor up to `yTop` (squeezing region). */
  band(yTop: number, fill = "#d9d9d9"): void {
    const top = this.sy(Math.min(yTop, this.y.max));
    const bottom = HEIGHT - MARGIN.bottom;
    this.body.push(
      `<rect x="${MARGIN.left}" y="${top.toFixed(2)}" ` +
      `width="${WIDTH - MARGIN.left - MARGIN.right}" ` +
      `height="${(bottom - top).toFixed(2)}" fill="${fill}" opacity="0.55"/>`,
    );
  }

  hline(y: number, color = "#555", dashed = true): void {
    const yy = this.sy(y).toFixed(2);
    const dash = dashed ? ` stroke-dasharray="2 4"` : "";
    this.body.push(
      `<line x1="${MARGIN.left}" x2="${WIDTH - MARGIN.right}" ` +
      `y1="${yy}" y2="${yy}" stroke="${color}"${dash}/>`,
    );
  }

  ellipse(cx: number, cy: number, rx: number, ry: number, angle: number,
          style: SeriesStyle, label = ""): void {
    // axis-space radii are mapped through the linear scales
    const px = this.sx(cx);
    const py = this.sy(cy);
    const sxr = Math.abs(this.sx(cx + rx) - px);
    const syr = Math.abs(this.sy(cy + ry) - py);
    const deg = (-angle * 180) / Math.PI; // SVG y points down
    const dash = style.dashed ? ` stroke-dasharray="7 4"` : "";
    this.body.push(
      `<ellipse cx="${px.toFixed(2)}" cy="${py.toFixed(2)}" ` +
      `rx="${sxr.toFixed(2)}" ry="${syr.toFixed(2)}" fill="none" ` +
      `stroke="${style.color}" stroke-width="${style.width ?? 1.8}"${dash} ` +
      `transform="rotate(${deg.toFixed(3)} ${px.toFixed(2)} ${py.toFixed(2)})"/>`,
    );
    if (label) this.legendEntries.push({ label, style });
  }

  text(x: number, y: number, content: string, color = "#333"): void {
    this.body.push(
      `<text x="${this.sx(x).toFixed(2)}" y="${this.sy(y).toFixed(2)}" ` +
      `font-size="12" fill="${color}">${esc(content)}</text>`,
    );
  }

  private ticks(spec: AxisSpec): number[] {
    if (spec.scale === "log") {
      const lo = Math.ceil(Math.log10(spec.min) - 1e-9);
      const hi = Math.floor(Math.log10(spec.max) + 1e-9);
      const out: number[] = [];
      for (let d = lo; d <= hi; d++) out.push(10 ** d);
      if (out.length >= 2) return out;
      return [spec.min, spec.max];
    }
    const span = spec.max - spec.min;
    const step = 10 ** Math.floor(Math.log10(span / 4));
    const mult = span / step > 8 ? 2 : 1;
    const out: number[] = [];
    const s = step * mult;
    for (let v = Math.ceil(spec.min / s) * s; v <= spec.max + 1e-12 * span; v += s) {
      out.push(v);
    }
    return out;
  }

  private fmt(v: number, scale: Scale): string {
    if (scale === "log") {
      const d = Math.round(Math.log10(v));
      return `1e${d}`;
    }
    if (v === 0) return "0";
    const a = Math.abs(v);
    if (a >= 0.01 && a < 10_000) return String(Number(v.toPrecision(4)));
    return v.toExponential(1);
  }

  /** Everything between the outer svg tags, without metadata. */
  fragment(): string {
    const frame =
      `<rect x="${MARGIN.left}" y="${MARGIN.top}" ` +
      `width="${WIDTH - MARGIN.left - MARGIN.right}" ` +
      `height="${HEIGHT - MARGIN.top - MARGIN.bottom}" ` +
      `fill="none" stroke="#222"/>`;
    const parts: string[] = [];
    for (const v of this.ticks(this.x)) {
      const px = this.sx(v).toFixed(2);
      parts.push(
        `<line x1="${px}" x2="${px}" y1="${HEIGHT - MARGIN.bottom}" ` +
        `y2="${HEIGHT - MARGIN.bottom + 5}" stroke="#222"/>`,
        `<text x="${px}" y="${HEIGHT - MARGIN.bottom + 18}" font-size="11" ` +
        `text-anchor="middle" fill="#222">${this.fmt(v, this.x.scale)}</text>`,
      );
    }
    for (const v of this.ticks(this.y)) {
      const py = this.sy(v).toFixed(2);
      parts.push(
        `<line x1="${MARGIN.left - 5}" x2="${MARGIN.left}" y1="${py}" ` +
        `y2="${py}" stroke="#222"/>`,
        `<text x="${MARGIN.left - 8}" y="${py}" font-size="11" ` +
        `text-anchor="end" dominant-baseline="middle" fill="#222">` +
        `${this.fmt(v, this.y.scale)}</text>`,
      );
    }
    parts.push(
      `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" ` +
      `y="${HEIGHT - 10}" font-size="13" text-anchor="middle" fill="#111">` +
      `${esc(this.x.label)}</text>`,
      `<text x="16" y="${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2}" ` +
      `font-size="13" text-anchor="middle" fill="#111" ` +
      `transform="rotate(-90 16 ${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2})">` +
      `${esc(this.y.label)}</text>`,
    );
    if (this.title) {
      parts.push(
        `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="15" ` +
        `font-size="13" text-anchor="middle" fill="#111">${esc(this.title)}</text>`,
      );
    }
    this.legendEntries.forEach((entry, i) => {
      const y = MARGIN.top + 16 + 16 * i;
      const x = MARGIN.left + 12;
      const dash = entry.style.dashed ? ` stroke-dasharray="7 4"` : "";
      parts.push(
        `<line x1="${x}" x2="${x + 26}" y1="${y}" y2="${y}" ` +
        `stroke="${entry.style.color}" stroke-width="2"${dash}/>`,
        `<text x="${x + 32}" y="${y + 4}" font-size="11" fill="#222">` +
        `${esc(entry.label)}</text>`,
      );
    });
    return [
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
      ...this.body,
      frame,
      ...parts,
    ].join("\n");
  }

  render(provenance: Provenance): string {
    return compose([this.fragment()], provenance);
  }
}

/** Stack panel fragments vertically into one document. */
export function compose(fragments: string[], provenance: Provenance): string {
  const metadata =
    `<metadata id="provenance">${esc(JSON.stringify(provenance))}</metadata>`;
  const panels = fragments.map((body, i) =>
    fragments.length === 1
      ? body
      : `<svg x="0" y="${i * HEIGHT}" width="${WIDTH}" height="${HEIGHT}" ` +
        `viewBox="0 0 ${WIDTH} ${HEIGHT}">\n${body}\n</svg>`);
  const total = HEIGHT * fragments.length;
  return [
    `<?xml version="1.0" encoding="UTF-8"?>`,
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
    `height="${total}" viewBox="0 0 ${WIDTH} ${total}">`,
    metadata,
    ...panels,
    `</svg>`,
  ].join("\n");
}
