import { SessionClient } from "./api.js";
import { ExperimentConsole } from "./console.js";

const root = document.getElementById("console");
if (root) {
  // same-origin API; put a reverse proxy in front of the session service
  const ui = new ExperimentConsole({
    root,
    client: new SessionClient(""),
    windowRef: window,
  });
  void ui.start();
}
