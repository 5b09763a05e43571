// Shapes of the HTTP API consumed by the console. All probabilities come
// verbatim from the service; the console never recomputes them.

export type Role = 'attribute' | 'class' | 'auxiliary-input'

export type VariableInfo = {
  name: string
  states: string[]
  role: Role
}

export type ModelInfo = {
  variables: VariableInfo[]
  edges: [string, string][]
  class_variable: string
  depth_order: string[]
  default_alpha: number
}

export type InstanceInfo = {
  id: number
  corruption: string
  labels: Record<string, string> | null
}

export type InstancesPage = {
  split: string
  total: number
  offset: number
  instances: InstanceInfo[]
}

export type Intervention = {
  attribute: string
  value: string
}

export type VariantResult = {
  class_dist: number[]
  class_label: string
  attr_labels: Record<string, string>
}

export type PredictResponse = {
  instance_id: number
  alpha: number
  interventions: Intervention[]
  heads: Record<string, number[]>
  poe_marginals: Record<string, number[]>
  z_alpha: number
  npc: VariantResult
  cnpc: VariantResult
}

export type ApiError = {
  status: number
  detail: string
}
