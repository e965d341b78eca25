/** Side-by-side comparison of two history entries with synchronized cameras. */

import { chamferL1 } from "./chamfer.js";
import { PointRenderer } from "./renderer.js";
import type { DecodedCloud } from "./types.js";

export class ComparePanes {
  readonly left: PointRenderer;
  readonly right: PointRenderer;

  constructor(leftCanvas: HTMLCanvasElement, rightCanvas: HTMLCanvasElement,
              private readout: (chamfer: number) => void) {
    this.left = new PointRenderer(leftCanvas);
    this.right = new PointRenderer(rightCanvas);
    // orbiting either pane mirrors the other
    this.left.attachControls(() => {
      this.right.camera.syncFrom(this.left.camera);
      this.drawBoth();
    });
    this.right.attachControls(() => {
      this.left.camera.syncFrom(this.right.camera);
      this.drawBoth();
    });
  }

  show(a: DecodedCloud, b: DecodedCloud): void {
    this.left.setCloud(a);
    this.right.setCloud(b);
    this.readout(chamferL1(a, b));
    this.drawBoth();
  }

  drawBoth(): void {
    this.left.draw();
    this.right.draw();
  }
}
