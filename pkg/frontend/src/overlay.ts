import { Band, Overlay, runningMean } from "./series";

export interface OverlayViolation {
  epoch: number;
  bound: number;
  empirical: number;
}

/**
 * Check that a certificate curve sits above the empirical curve at every
 * shared epoch.
 *
 * Average-type certificates (`target === "avg_grad_norm_sq"`) bound the
 * running average of the metric over epochs, so the comparison is against
 * the prefix mean of the empirical curve, not its pointwise value.
 */
export function checkOverlayDominates(band: Band, overlay: Overlay): OverlayViolation[] {
  const empirical =
    overlay.target === "avg_grad_norm_sq" ? runningMean(band.mean) : band.mean;
  const boundAt = new Map<number, number>();
  overlay.epochs.forEach((e, i) => boundAt.set(e, overlay.total[i]));
  const violations: OverlayViolation[] = [];
  band.epochs.forEach((e, i) => {
    const bound = boundAt.get(e);
    if (bound !== undefined && bound < empirical[i]) {
      violations.push({ epoch: e, bound, empirical: empirical[i] });
    }
  });
  return violations;
}
