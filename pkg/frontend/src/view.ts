/** DOM layer: subject entry, side-by-side stimulus panes, exactly two
 * response affordances (buttons or arrow keys), progress and completion.
 * Nothing on screen reveals which segment came from which source. */

import type { ControllerState } from "./controller.js";

export interface ViewHandlers {
  onStart: (subjectId: string) => void;
  onChoose: (side: "left" | "right") => void;
  onStimulusReady: () => void;
  onRetry: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className !== undefined) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class StudyView {
  private readonly doc: Document;
  private readonly handlers: ViewHandlers;

  private readonly entry: HTMLElement;
  private readonly subjectInput: HTMLInputElement;
  private readonly study: HTMLElement;
  private readonly composite: HTMLImageElement;
  private readonly original: HTMLImageElement;
  private readonly leftButton: HTMLButtonElement;
  private readonly rightButton: HTMLButtonElement;
  private readonly retryButton: HTMLButtonElement;
  private readonly progressText: HTMLElement;
  private readonly statusText: HTMLElement;
  private readonly doneScreen: HTMLElement;

  private shownTrialId: string | null = null;
  private imagesToLoad = 0;

  constructor(root: HTMLElement, handlers: ViewHandlers) {
    this.doc = root.ownerDocument;
    this.handlers = handlers;
    const doc = this.doc;

    root.replaceChildren();
    root.append(el(doc, "h1", "title", "Boundary comparison"));
    root.append(
      el(
        doc,
        "p",
        "instructions",
        "Two boundary segments are outlined in the left image, " +
          "one labeled L and one labeled R. The right image is the " +
          "untouched original for reference. Choose the perceptually " +
          "stronger boundary.",
      ),
    );

    this.entry = el(doc, "form", "entry");
    const label = el(doc, "label", undefined, "Subject id ");
    this.subjectInput = el(doc, "input");
    this.subjectInput.name = "subject";
    label.append(this.subjectInput);
    const startButton = el(doc, "button", "start", "Start");
    startButton.type = "submit";
    this.entry.append(label, startButton);
    this.entry.addEventListener("submit", (event) => {
      event.preventDefault();
      this.handlers.onStart(this.subjectInput.value);
    });
    root.append(this.entry);

    this.study = el(doc, "section", "study");
    const panes = el(doc, "div", "panes");
    const compositeFigure = el(doc, "figure", "pane");
    this.composite = el(doc, "img", "composite");
    this.composite.alt = "two outlined boundary segments";
    compositeFigure.append(
      this.composite,
      el(doc, "figcaption", undefined, "Segments L and R"),
    );
    const originalFigure = el(doc, "figure", "pane");
    this.original = el(doc, "img", "original");
    this.original.alt = "original image";
    originalFigure.append(
      this.original,
      el(doc, "figcaption", undefined, "Original"),
    );
    panes.append(compositeFigure, originalFigure);
    this.study.append(panes);

    const buttons = el(doc, "div", "choices");
    this.leftButton = el(doc, "button", "choose-left", "L is stronger (←)");
    this.leftButton.type = "button";
    this.rightButton = el(doc, "button", "choose-right", "R is stronger (→)");
    this.rightButton.type = "button";
    this.leftButton.addEventListener("click", () => this.handlers.onChoose("left"));
    this.rightButton.addEventListener("click", () =>
      this.handlers.onChoose("right"),
    );
    buttons.append(this.leftButton, this.rightButton);
    this.study.append(buttons);

    this.progressText = el(doc, "p", "progress");
    this.study.append(this.progressText);
    root.append(this.study);

    this.statusText = el(doc, "p", "status");
    root.append(this.statusText);
    this.retryButton = el(doc, "button", "retry", "Retry submission");
    this.retryButton.type = "button";
    this.retryButton.addEventListener("click", () => this.handlers.onRetry());
    root.append(this.retryButton);

    this.doneScreen = el(doc, "section", "done");
    root.append(this.doneScreen);

    doc.addEventListener("keydown", (event) => {
      const key = (event as KeyboardEvent).key;
      if (key === "ArrowLeft") {
        this.handlers.onChoose("left");
      } else if (key === "ArrowRight") {
        this.handlers.onChoose("right");
      }
    });

    this.render({
      phase: "idle",
      sessionId: null,
      trial: null,
      progress: null,
      resumed: false,
      message: null,
    });
  }

  private showTrial(trialId: string, compositeUrl: string, originalUrl: string) {
    this.shownTrialId = trialId;
    this.imagesToLoad = 2;
    for (const [img, url] of [
      [this.composite, compositeUrl],
      [this.original, originalUrl],
    ] as const) {
      img.addEventListener("load", () => this.imageLoaded(trialId), {
        once: true,
      });
      img.src = url;
      // A cached image may be complete before the handler can fire.
      if (img.complete && img.naturalWidth > 0) {
        img.dispatchEvent(new Event("load"));
      }
    }
  }

  private imageLoaded(trialId: string): void {
    if (trialId !== this.shownTrialId) {
      return;
    }
    this.imagesToLoad -= 1;
    if (this.imagesToLoad === 0) {
      this.handlers.onStimulusReady();
    }
  }

  render(state: ControllerState): void {
    const inStudy =
      state.phase === "stimulus" ||
      state.phase === "armed" ||
      state.phase === "submitting" ||
      state.phase === "loading";
    this.entry.style.display =
      state.phase === "idle" || state.phase === "starting" ? "" : "none";
    this.study.style.display = inStudy ? "" : "none";
    this.doneScreen.style.display = state.phase === "complete" ? "" : "none";
    this.retryButton.style.display =
      state.phase === "error" ? "" : "none";

    const choosable = state.phase === "armed";
    this.leftButton.disabled = !choosable;
    this.rightButton.disabled = !choosable;

    if (state.trial !== null && state.trial.trialId !== this.shownTrialId) {
      this.showTrial(
        state.trial.trialId,
        state.trial.compositeImageUrl,
        state.trial.originalImageUrl,
      );
    }
    if (state.trial === null) {
      this.shownTrialId = null;
    }

    if (state.progress !== null) {
      this.progressText.textContent = `${state.progress.done} / ${state.progress.total}`;
    }
    if (state.phase === "complete" && state.progress !== null) {
      this.doneScreen.replaceChildren(
        el(
          this.doc,
          "p",
          "done-text",
          `All done: ${state.progress.done} / ${state.progress.total} ` +
            "trials recorded. Thank you.",
        ),
      );
    }
    this.statusText.textContent = state.message ?? "";
  }
}
