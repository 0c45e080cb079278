/** Feedback panel state: everything shown comes from server broadcasts. */

import { ActionMessage, GestureMessage, RejectionMessage, StateMessage } from "./protocol.js";

export const HISTORY_LIMIT = 18;

export interface PanelState {
  gesture: GestureMessage | null;
  action: ActionMessage | null;
  rejection: RejectionMessage | null;
  posture: string;
  currentAction: string | null;
  history: string[];
  connected: boolean;
}

export class FeedbackPanel {
  state: PanelState = {
    gesture: null,
    action: null,
    rejection: null,
    posture: "standing",
    currentAction: null,
    history: [],
    connected: false,
  };

  constructor(private onChange: (state: PanelState) => void = () => {}) {}

  private emit() {
    this.onChange(this.state);
  }

  setConnected(connected: boolean) {
    this.state.connected = connected;
    this.emit();
  }

  onGesture(msg: GestureMessage) {
    this.state.gesture = msg;
    if (msg.part !== null) {
      this.state.history.push(msg.token);
      if (this.state.history.length > HISTORY_LIMIT) {
        this.state.history.splice(0, this.state.history.length - HISTORY_LIMIT);
      }
    }
    this.emit();
  }

  onAction(msg: ActionMessage) {
    this.state.action = msg;
    this.state.rejection = null;
    this.state.posture = msg.resulting_posture;
    this.state.currentAction = msg.action;
    this.emit();
  }

  onRejection(msg: RejectionMessage) {
    this.state.rejection = msg;
    this.emit();
  }

  onState(msg: StateMessage) {
    this.state.posture = msg.posture;
    this.state.currentAction = msg.current_action;
    this.state.history = msg.history.slice(-HISTORY_LIMIT);
    this.emit();
  }
}
