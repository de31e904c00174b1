import type { SessionFlow } from "./flow.js";
import type { Demographics, UiSessionState } from "./types.js";

const AGE_BANDS = [
  "under_18", "18_24", "25_34", "35_44", "45_54", "55_64", "65_plus",
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function preload(url: string): Promise<void> {
  return new Promise((resolve) => {
    const img = new Image();
    img.onload = () => resolve();
    img.onerror = () => resolve(); // still render; the <img> will show alt text
    img.src = url;
  });
}

export class SurveyView {
  constructor(
    private readonly root: HTMLElement,
    private readonly flow: SessionFlow,
  ) {
    flow.onChange((state) => void this.render(state));
  }

  renderDemographicsForm(): void {
    this.root.replaceChildren();
    const form = el("form", { class: "demographics" });
    form.append(el("h1", {}, "Street view safety survey"));
    form.append(el("p", {}, "Before you start, tell us a little about yourself."));

    const ageLabel = el("label", {}, "Age band ");
    const ageSelect = el("select", { name: "age_band", required: "required" });
    for (const band of AGE_BANDS) {
      ageSelect.append(el("option", { value: band }, band.replace("_", "-")));
    }
    ageLabel.append(ageSelect);

    const genderLabel = el("label", {}, "Gender (optional) ");
    const genderInput = el("input", { name: "gender", maxlength: "40" });
    genderLabel.append(genderInput);

    const submit = el("button", { type: "submit" }, "Start");
    form.append(ageLabel, genderLabel, submit);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      submit.disabled = true;
      const demographics: Demographics = { age_band: ageSelect.value };
      if (genderInput.value.trim()) demographics.gender = genderInput.value.trim();
      void this.flow.start(demographics);
    });
    this.root.append(form);
  }

  private async render(state: UiSessionState): Promise<void> {
    if (state.stage === "pair" && state.pair) {
      await this.renderPair(state);
    } else if (state.stage === "done") {
      this.root.replaceChildren(
        el("h1", {}, "All done — thank you!"),
        el("p", {}, "Your responses have been recorded."),
      );
    } else if (state.stage === "error") {
      this.root.replaceChildren(
        el("h1", {}, "Something went wrong"),
        el("p", {}, state.errorMessage ?? "Unknown error"),
        el("button", { onclick: "location.reload()" }, "Restart"),
      );
    }
  }

  private async renderPair(state: UiSessionState): Promise<void> {
    const display = this.flow.currentDisplay();
    if (!display || !state.pair) return;

    // decode both images before showing either, so neither side gets a
    // head start on exposure time
    await Promise.all([preload(display.firstUrl), preload(display.secondUrl)]);

    this.root.replaceChildren();
    this.root.append(
      el("h1", {}, "Which place looks safer?"),
      el("p", { class: "progress" }, `Pair ${state.pair.index} of ${state.pair.total}`),
    );
    const row = el("div", { class: "pair-row" });
    for (const position of ["first", "second"] as const) {
      const url = position === "first" ? display.firstUrl : display.secondUrl;
      const button = el("button", { class: "choice", "data-position": position });
      const img = el("img", { src: url, alt: "street view image", draggable: "false" });
      button.append(img);
      button.addEventListener("mouseenter", () => this.flow.inspecting(position));
      button.addEventListener("click", () => {
        void this.flow.choose(position);
      });
      row.append(button);
    }
    this.root.append(row);
  }
}
