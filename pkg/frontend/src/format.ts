export function formatLevel(x: number): string {
  return x.toFixed(2);
}

export function bannerText(level: number): string {
  return `Test at level ${formatLevel(level)}`;
}

export function formatNumber(x: number, digits = 4): string {
  if (!Number.isFinite(x)) return x > 0 ? "+inf" : "-inf";
  return x.toFixed(digits);
}

// a null side means the set is unbounded on that side
export function formatInterval(
  lower: number | null,
  upper: number | null,
  digits = 3,
): string {
  const lo = lower === null ? "-inf" : lower.toFixed(digits);
  const hi = upper === null ? "+inf" : upper.toFixed(digits);
  return `[${lo}, ${hi}]`;
}
