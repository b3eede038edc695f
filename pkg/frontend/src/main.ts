/** Wires the API client, session controller, and DOM view together.
 * The service origin comes from the `api` query parameter; with none,
 * requests go to the page's own origin. */

import { StudyApi } from "./api.js";
import { SessionController } from "./controller.js";
import { StudyView } from "./view.js";

const params = new URLSearchParams(window.location.search);
const api = new StudyApi(params.get("api") ?? "");

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}

let view: StudyView;
const controller = new SessionController({
  api,
  onChange: (state) => view.render(state),
});
view = new StudyView(root, {
  onStart: (subjectId) => void controller.start(subjectId),
  onChoose: (side) => void controller.choose(side),
  onStimulusReady: () => controller.stimulusReady(),
  onRetry: () => void controller.retry(),
});
