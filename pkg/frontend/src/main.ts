import { HttpSurveyApi } from "./api.js";
import { SessionFlow } from "./flow.js";
import { GazeForwarder, connectLocalBridge } from "./gazeBridge.js";
import { SurveyView } from "./ui.js";

const BRIDGE_URL = "ws://127.0.0.1:8887/gaze";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const api = new HttpSurveyApi("");
  const flow = new SessionFlow(api);
  const view = new SurveyView(root, flow);

  flow.onSessionStarted((sessionId) => {
    const source = connectLocalBridge(BRIDGE_URL);
    if (source) {
      const forwarder = new GazeForwarder(api, sessionId);
      forwarder.attach(source);
      flow.attachGaze(forwarder);
    }
  });

  view.renderDemographicsForm();
}

boot();
