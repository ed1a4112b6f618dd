// Session controller: polls the service, holds the current view model, and
// pushes label submissions. The server is the source of truth; a card shows
// as "labeled" only after its POST is acknowledged.

import {
  ApiClient,
  BatchPayload,
  BatchSample,
  LabelValue,
  MetricsRecord,
  SessionState,
} from "./api.js";

export interface CardState {
  sample: BatchSample;
  submitted: LabelValue | null; // acknowledged by the server
  pending: boolean;             // request in flight
}

export interface ViewModel {
  connection: "ok" | "lost";
  session: SessionState | null;
  cards: CardState[];
  metrics: MetricsRecord[];
  batchCycle: number | null;
}

export type Listener = (vm: ViewModel) => void;

export class SessionController {
  private vm: ViewModel = {
    connection: "ok",
    session: null,
    cards: [],
    metrics: [],
    batchCycle: null,
  };
  private listeners: Listener[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private api: ApiClient, private pollMs = 1000) {}

  get view(): ViewModel {
    return this.vm;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
    fn(this.vm);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.vm);
  }

  start(): void {
    void this.poll();
    this.timer = setInterval(() => void this.poll(), this.pollMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async poll(): Promise<void> {
    let session: SessionState;
    try {
      session = await this.api.session();
    } catch {
      // keep local state; show a retry banner until the service is back
      this.vm = { ...this.vm, connection: "lost" };
      this.emit();
      return;
    }
    let cards = this.vm.cards;
    let batchCycle = this.vm.batchCycle;
    if (session.status === "awaiting_labels") {
      try {
        const batch = await this.api.batch();
        cards = this.mergeBatch(batch);
        batchCycle = batch.cycle;
      } catch {
        this.vm = { ...this.vm, connection: "lost" };
        this.emit();
        return;
      }
    } else {
      cards = [];
      batchCycle = null;
    }
    let metrics = this.vm.metrics;
    try {
      metrics = (await this.api.metrics()).records;
    } catch {
      // metrics lagging one poll behind is harmless
    }
    this.vm = { connection: "ok", session, cards, metrics, batchCycle };
    this.emit();
  }

  // keep submitted/pending marks for cards that are still being served
  private mergeBatch(batch: BatchPayload): CardState[] {
    const old = new Map(this.vm.cards.map((c) => [c.sample.id, c]));
    return batch.samples.map((sample) => {
      const prev = old.get(sample.id);
      return prev
        ? { sample, submitted: prev.submitted, pending: prev.pending }
        : { sample, submitted: null, pending: false };
    });
  }

  async submitLabel(sampleId: number, value: LabelValue): Promise<boolean> {
    const card = this.vm.cards.find((c) => c.sample.id === sampleId);
    if (!card || card.submitted !== null || card.pending) return false;
    card.pending = true;
    this.emit();
    try {
      const result = await this.api.postLabels({ [String(sampleId)]: value });
      card.pending = false;
      if (result.accepted.includes(sampleId)) {
        card.submitted = value;
        this.emit();
        return true;
      }
      this.emit();
      return false;
    } catch {
      card.pending = false;
      this.emit();
      return false;
    }
  }

  /** ids of cards still without an acknowledged label, in display order */
  unlabeledIds(): number[] {
    return this.vm.cards.filter((c) => c.submitted === null).map((c) => c.sample.id);
  }
}
