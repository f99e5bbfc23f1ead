/** Largest number of events inside any sliding window of `windowMs`. */
export function maxPerWindow(times: number[], windowMs: number): number {
  let worst = 0;
  for (let i = 0; i < times.length; i++) {
    let count = 0;
    for (let j = i; j < times.length && times[j]! < times[i]! + windowMs; j++) count++;
    worst = Math.max(worst, count);
  }
  return worst;
}
