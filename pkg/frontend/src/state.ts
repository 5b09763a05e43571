// Console state and transitions. Interventions live entirely client-side;
// every change re-issues exactly one /predict and the displayed numbers
// always come from the latest response. Responses superseded by a newer
// request are discarded by sequence number.

import { ApiClient } from './api.js'
import type { Intervention, ModelInfo, PredictResponse } from './types.js'

export type ConsoleState = {
  model: ModelInfo | null
  instanceId: number | null
  instanceLabels: Record<string, string> | null
  corruption: string
  interventions: Intervention[]
  alpha: number
  response: PredictResponse | null
  suggestion: string | null
  error: string | null
  pending: boolean
}

export function initialState(): ConsoleState {
  return {
    model: null,
    instanceId: null,
    instanceLabels: null,
    corruption: 'none',
    interventions: [],
    alpha: 0.9,
    response: null,
    suggestion: null,
    error: null,
    pending: false,
  }
}

export type Listener = (state: ConsoleState) => void

export class ConsoleStore {
  state: ConsoleState = initialState()
  private api: ApiClient
  private listeners: Listener[] = []
  private seq = 0

  constructor(api: ApiClient) {
    this.api = api
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn)
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state)
  }

  private set(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch }
    this.emit()
  }

  async loadModel(): Promise<void> {
    const model = await this.api.model()
    this.set({ model, alpha: model.default_alpha })
  }

  attributeStates(name: string): string[] {
    const v = this.state.model?.variables.find((x) => x.name === name)
    return v ? v.states : []
  }

  /** Validation done before any request leaves the client. */
  canIntervene(attribute: string, value: string): string | null {
    const model = this.state.model
    if (!model) return 'model not loaded'
    if (attribute === model.class_variable) return 'cannot intervene on the class variable'
    const variable = model.variables.find((v) => v.name === attribute)
    if (!variable || variable.role !== 'attribute') return `unknown attribute ${attribute}`
    if (!variable.states.includes(value)) return `unknown state ${value} for ${attribute}`
    if (this.state.interventions.some((iv) => iv.attribute === attribute))
      return `${attribute} is already intervened`
    return null
  }

  async selectInstance(
    id: number,
    labels: Record<string, string> | null,
    corruption: string,
  ): Promise<void> {
    this.set({
      instanceId: id,
      instanceLabels: labels,
      corruption,
      interventions: [],
      response: null,
      error: null,
    })
    await this.refresh()
  }

  async applyIntervention(attribute: string, value: string): Promise<void> {
    const reason = this.canIntervene(attribute, value)
    if (reason) {
      this.set({ error: reason })
      return
    }
    this.set({
      interventions: [...this.state.interventions, { attribute, value }],
      error: null,
    })
    await this.refresh()
  }

  async undo(): Promise<void> {
    if (this.state.interventions.length === 0) return
    this.set({ interventions: this.state.interventions.slice(0, -1), error: null })
    await this.refresh()
  }

  async setAlpha(alpha: number): Promise<void> {
    if (!(alpha >= 0 && alpha <= 1)) {
      this.set({ error: `alpha ${alpha} outside [0,1]` })
      return
    }
    this.set({ alpha, error: null })
    await this.refresh()
  }

  /** One /predict (plus one /suggest) per state change; stale responses
   * are dropped. */
  async refresh(): Promise<void> {
    if (this.state.instanceId === null) return
    const ticket = ++this.seq
    this.set({ pending: true })
    try {
      const response = await this.api.predict(
        this.state.instanceId,
        this.state.alpha,
        this.state.interventions,
      )
      if (ticket !== this.seq) return // superseded
      let suggestion: string | null = null
      try {
        const s = await this.api.suggest(this.state.interventions.map((iv) => iv.attribute))
        suggestion = s.suggestion
      } catch {
        suggestion = null
      }
      if (ticket !== this.seq) return
      this.set({ response, suggestion, pending: false, error: null })
    } catch (e) {
      if (ticket !== this.seq) return
      this.set({ pending: false, error: e instanceof Error ? e.message : String(e) })
    }
  }
}
