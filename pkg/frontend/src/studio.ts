/**
 * Studio session state and flows. All server interaction goes through the
 * typed client; views are reconstructable from ids alone, so a full page
 * reload loses nothing that matters.
 */
import { ApiError, StudioApi } from "./api.js";
import type { ClustersResponse, EditTextResult, RetrievalResponse, SessionInfo } from "./api.js";
import { maskToPng, Point } from "./mask.js";

export const ALPHA_MIN = 0;
export const ALPHA_MAX = 1.5;

export interface ResultView {
  resultId: string;
  imageId: string;
  kind: "text" | "exemplar";
  trace: number[];
  maskId?: string;
}

export interface Notice {
  text: string;
  retryable: boolean;
}

export interface StudioState {
  sessionId?: string;
  sourceImageId?: string;
  identityImageId?: string;
  width: number;
  height: number;
  alpha: number;
  requestText: string;
  lambda: number;
  maskPolygon: Point[];
  result?: ResultView;
  clusters?: ClustersResponse;
  retrieval?: RetrievalResponse;
  notice?: Notice;
  busy: boolean;
}

export function clampAlpha(alpha: number): number {
  if (Number.isNaN(alpha)) return ALPHA_MIN;
  return Math.min(ALPHA_MAX, Math.max(ALPHA_MIN, alpha));
}

export class Studio {
  state: StudioState = {
    width: 0,
    height: 0,
    alpha: 1.0,
    requestText: "",
    lambda: 0.3,
    maskPolygon: [],
    busy: false,
  };
  onChange: (state: StudioState) => void = () => {};

  constructor(public api: StudioApi) {}

  private update(patch: Partial<StudioState>) {
    this.state = { ...this.state, ...patch };
    this.onChange(this.state);
  }

  private fail(err: unknown) {
    const notice: Notice =
      err instanceof ApiError
        ? { text: err.message, retryable: err.retryable }
        : { text: String(err), retryable: false };
    this.update({ notice, busy: false });
  }

  /** Upload a source image and open an editing session on it. */
  async start(png: Uint8Array): Promise<SessionInfo | undefined> {
    this.update({ busy: true, notice: undefined });
    try {
      const up = await this.api.uploadPng(png);
      const session = await this.api.createSession(up.image_id);
      this.update({
        sessionId: session.session_id,
        sourceImageId: up.image_id,
        identityImageId: session.identity_image_id,
        width: up.width,
        height: up.height,
        result: undefined,
        busy: false,
      });
      return session;
    } catch (err) {
      this.fail(err);
      return undefined;
    }
  }

  setAlpha(alpha: number) {
    this.update({ alpha: clampAlpha(alpha) });
  }

  setRequest(text: string) {
    this.update({ requestText: text });
  }

  setLambda(lambda: number) {
    this.update({ lambda });
  }

  setMaskPolygon(polygon: Point[]) {
    this.update({ maskPolygon: polygon });
  }

  /** Run the text edit, rasterizing and uploading the mask polygon if set. */
  async submitTextEdit(): Promise<EditTextResult | undefined> {
    const { sessionId, requestText, lambda, alpha, maskPolygon, width, height } = this.state;
    if (!sessionId) {
      this.update({ notice: { text: "Upload an image first.", retryable: false } });
      return undefined;
    }
    this.update({ busy: true, notice: undefined });
    try {
      let maskId: string | undefined;
      if (maskPolygon.length >= 3) {
        const up = await this.api.uploadPng(maskToPng(maskPolygon, width, height));
        maskId = up.image_id;
      }
      const res = await this.api.editText(sessionId, requestText, lambda, alpha, maskId);
      this.update({
        result: {
          resultId: res.result_id,
          imageId: res.image_id,
          kind: "text",
          trace: res.trace,
          maskId,
        },
        busy: false,
      });
      return res;
    } catch (err) {
      this.fail(err);
      return undefined;
    }
  }

  /** Apply an exemplar's style (from the gallery) to the session image. */
  async applyExemplar(pairId: string): Promise<ResultView | undefined> {
    const { sessionId, alpha } = this.state;
    if (!sessionId) {
      this.update({ notice: { text: "Upload an image first.", retryable: false } });
      return undefined;
    }
    this.update({ busy: true, notice: undefined });
    try {
      const res = await this.api.editExemplar(sessionId, [pairId], alpha);
      const view: ResultView = {
        resultId: res.result_id,
        imageId: res.image_id,
        kind: "exemplar",
        trace: [],
      };
      this.update({ result: view, busy: false });
      return view;
    } catch (err) {
      this.fail(err);
      return undefined;
    }
  }

  /**
   * The image to show at the current slider strength. Re-renders through
   * /interpolate without re-optimizing; before any result, the identity view.
   */
  currentViewUrl(): string | undefined {
    const { sessionId, result, alpha, identityImageId } = this.state;
    if (sessionId && result) {
      return this.api.interpolateUrl(sessionId, result.resultId, alpha);
    }
    if (identityImageId) return this.api.imageUrl(identityImageId);
    return undefined;
  }

  async loadClusters(k: number) {
    try {
      this.update({ clusters: await this.api.clusters(k), notice: undefined });
    } catch (err) {
      this.fail(err);
    }
  }

  async loadRetrieval(pairId: string, k = 5) {
    try {
      this.update({ retrieval: await this.api.retrieve(pairId, k), notice: undefined });
    } catch (err) {
      this.fail(err);
    }
  }

  /** Rebuild the view model for an existing server-side session. */
  async reconstruct(sessionId: string, sourceImageId: string, identityImageId: string) {
    this.update({
      sessionId,
      sourceImageId,
      identityImageId,
      result: undefined,
      notice: undefined,
    });
  }
}
