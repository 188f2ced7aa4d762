import { ExplorerApi } from "./api.js";
import { ExplorerApp } from "./ui.js";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  // served by the latentaug service under /ui; the API lives at the origin root
  const app = new ExplorerApp(new ExplorerApi(""), root);
  void app.start();
});
