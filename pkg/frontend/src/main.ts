import { ServerApi } from "./api.js";
import { App } from "./app.js";

const app = new App(new ServerApi(""));
void app.start();
