/* Zoom/pan state for the canvas viewer.
 *
 * Screen-to-image mapping lives here and nowhere else, so handle positions,
 * verdict requests and saved annotations all stay in native image pixels no
 * matter how the view is zoomed or panned.
 */

const MIN_SCALE = 0.05;
const MAX_SCALE = 40;

export class Viewport {
  scale = 1;
  offsetX = 0;
  offsetY = 0;

  toImage(sx: number, sy: number): { x: number; y: number } {
    return { x: (sx - this.offsetX) / this.scale, y: (sy - this.offsetY) / this.scale };
  }

  toScreen(x: number, y: number): { x: number; y: number } {
    return { x: x * this.scale + this.offsetX, y: y * this.scale + this.offsetY };
  }

  /** Zoom by a factor while keeping the image point under (sx, sy) fixed. */
  zoomAt(sx: number, sy: number, factor: number): void {
    const anchor = this.toImage(sx, sy);
    this.scale = clampScale(this.scale * factor);
    this.offsetX = sx - anchor.x * this.scale;
    this.offsetY = sy - anchor.y * this.scale;
  }

  panBy(dx: number, dy: number): void {
    this.offsetX += dx;
    this.offsetY += dy;
  }

  /** Fit an image into a view box, centred, without cropping. */
  fit(imageW: number, imageH: number, viewW: number, viewH: number): void {
    this.scale = clampScale(Math.min(viewW / imageW, viewH / imageH));
    this.offsetX = (viewW - imageW * this.scale) / 2;
    this.offsetY = (viewH - imageH * this.scale) / 2;
  }
}

function clampScale(s: number): number {
  return s < MIN_SCALE ? MIN_SCALE : s > MAX_SCALE ? MAX_SCALE : s;
}
