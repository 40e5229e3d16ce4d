/** Inline SVG sparkline for the optimization objective trace. */

export function sparklineSvg(trace: number[], width = 120, height = 28): string {
  if (trace.length === 0) return "";
  const lo = Math.min(...trace);
  const hi = Math.max(...trace);
  const span = hi - lo || 1;
  const pad = 2;
  const points = trace
    .map((v, i) => {
      const x = pad + (i / Math.max(1, trace.length - 1)) * (width - 2 * pad);
      const y = pad + (1 - (v - lo) / span) * (height - 2 * pad);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  return (
    `<svg class="sparkline" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    `<polyline fill="none" stroke="currentColor" stroke-width="1.5" points="${points}"/></svg>`
  );
}
