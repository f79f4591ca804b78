/**
 * Tiny SVG path for the list-churn history next to the grid.
 *
 * Values are fractions in [0, 1], oldest first. The output is a complete
 * "d" attribute string; an empty history yields an empty string.
 */

export function sparklinePath(
  values: readonly number[],
  width = 120,
  height = 28,
): string {
  if (values.length === 0) return "";
  const pad = 1;
  const innerHeight = height - 2 * pad;
  const clamp = (v: number) => Math.min(1, Math.max(0, v));
  const y = (v: number) => (pad + (1 - clamp(v)) * innerHeight).toFixed(1);

  if (values.length === 1) {
    const level = y(values[0] ?? 0);
    return `M0,${level} L${width},${level}`;
  }

  const step = width / (values.length - 1);
  const points = values.map((v, i) => `${(i * step).toFixed(1)},${y(v)}`);
  return `M${points[0]} L${points.slice(1).join(" ")}`;
}
